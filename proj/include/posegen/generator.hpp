#pragma once

#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "posegen/geometry.hpp"
#include "posegen/pose_tokenizer.hpp"
#include "posegen/reasoner.hpp"
#include "posegen/text_codec.hpp"

namespace posegen::gen {

struct GenerationConfig {
  int max_text_tokens = 128;  // cap on generated text tokens, prompt excluded
  double temperature = 0.0;   // <= 0 decodes greedily
  std::uint64_t seed = 0;     // sampling seed; unused when greedy
};

struct GenerationResult {
  std::string abstract_prompt;
  std::string detailed_prompt;
  vq::PoseTokenSequence pose_tokens;
  geometry::PoseParams pose;
  geometry::JointPositions joints;
};

/// Text decoding hit the length cap before the end-of-reasoning marker.
/// Carries whatever text had been produced by then.
struct ReasoningOverflow : std::runtime_error {
  std::string partial_text;

  explicit ReasoningOverflow(std::string partial)
      : std::runtime_error("reasoning overflow: no end-of-reasoning marker within the "
                           "text length cap"),
        partial_text(std::move(partial)) {}
};

/// [BOS, abstract words...] as model input ids.
std::vector<int> encode_prompt(const std::string& abstract, const text::SharedVocabulary& vocab);

/// Autoregressive text decoding from the prompt ids until SPQ; returns the
/// full id sequence including the closing SPQ. Greedy when temperature <= 0,
/// otherwise softmax sampling at the given temperature.
std::vector<int> decode_text(std::vector<int> prompt_ids, const model::ModelParams& params,
                             const model::LoraAdapterSet* adapters,
                             const GenerationConfig& config, const text::SharedVocabulary& vocab);

/// Per-slot argmax over the pose logits of a single forward pass.
vq::PoseTokenSequence decode_pose_tokens(const std::vector<int>& text_ids,
                                         const model::ModelParams& params,
                                         const model::LoraAdapterSet* adapters);

/// Full pipeline: prompt -> detailed text -> pose tokens -> pose -> joints.
GenerationResult generate(const std::string& abstract, const text::SharedVocabulary& vocab,
                          const model::ModelParams& params,
                          const model::LoraAdapterSet* adapters,
                          const vq::TokenizerParams& tokenizer,
                          const GenerationConfig& config = {});

/// Builds one supervised unit from an (abstract, detailed, pose) triplet:
/// ids [BOS, abstract..., detailed..., SPQ], supervision starting at the
/// last abstract position, pose targets from the tokenizer.
model::TrainExample make_train_example(const std::string& abstract, const std::string& detailed,
                                       const geometry::PoseParams& pose,
                                       const text::SharedVocabulary& vocab,
                                       const vq::TokenizerParams& tokenizer);

/// One JSON object with every result field; pose and joints flatten to 72
/// numbers each.
nlohmann::json to_json(const GenerationResult& result);

}  // namespace posegen::gen
