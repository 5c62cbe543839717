#include "posegen/generator.hpp"

#include <cmath>

#include "posegen/rng.hpp"

namespace posegen::gen {
namespace {

// First index of the row maximum, so equal logits resolve identically on
// every platform.
int argmax_row(const Eigen::RowVectorXd& row) {
  int best = 0;
  for (int j = 1; j < row.size(); ++j) {
    if (row(j) > row(best)) best = j;
  }
  return best;
}

int sample_row(const Eigen::RowVectorXd& logits, double temperature, rng::Engine& eng) {
  const Eigen::ArrayXd scaled = logits.transpose().array() / temperature;
  const Eigen::ArrayXd probs = (scaled - scaled.maxCoeff()).exp();
  const double z = probs.sum();
  double u = rng::uniform(eng, 0.0, 1.0) * z;
  for (int j = 0; j < probs.size(); ++j) {
    u -= probs(j);
    if (u <= 0.0) return j;
  }
  return static_cast<int>(probs.size()) - 1;  // guard against rounding spill
}

}  // namespace

std::vector<int> encode_prompt(const std::string& abstract, const text::SharedVocabulary& vocab) {
  const auto toks = text::tokenize(abstract, vocab, text::Segment::Abstract);
  if (toks.ids.empty()) throw std::invalid_argument("abstract prompt has no tokens");
  std::vector<int> ids;
  ids.reserve(toks.ids.size() + 1);
  ids.push_back(text::SharedVocabulary::kBos);
  ids.insert(ids.end(), toks.ids.begin(), toks.ids.end());
  return ids;
}

std::vector<int> decode_text(std::vector<int> prompt_ids, const model::ModelParams& params,
                             const model::LoraAdapterSet* adapters,
                             const GenerationConfig& config, const text::SharedVocabulary& vocab) {
  rng::Engine eng(config.seed);
  for (int step = 0; step < config.max_text_tokens; ++step) {
    const model::ForwardResult out = model::forward(prompt_ids, params, adapters);
    const Eigen::RowVectorXd last = out.text_logits.row(out.text_logits.rows() - 1);
    const int next = config.temperature <= 0.0 ? argmax_row(last)
                                               : sample_row(last, config.temperature, eng);
    prompt_ids.push_back(next);
    if (next == text::SharedVocabulary::kSpq) return prompt_ids;
  }
  text::TokenSequence partial;
  for (int id : prompt_ids) partial.append(id, text::Segment::Detailed);
  throw ReasoningOverflow(text::detokenize(partial, vocab));
}

vq::PoseTokenSequence decode_pose_tokens(const std::vector<int>& text_ids,
                                         const model::ModelParams& params,
                                         const model::LoraAdapterSet* adapters) {
  const model::ForwardResult out = model::forward(text_ids, params, adapters);
  vq::PoseTokenSequence tokens(out.pose_logits.rows());
  for (int q = 0; q < out.pose_logits.rows(); ++q) {
    tokens[q] = argmax_row(out.pose_logits.row(q));
  }
  return tokens;
}

GenerationResult generate(const std::string& abstract, const text::SharedVocabulary& vocab,
                          const model::ModelParams& params,
                          const model::LoraAdapterSet* adapters,
                          const vq::TokenizerParams& tokenizer, const GenerationConfig& config) {
  const std::vector<int> prompt_ids = encode_prompt(abstract, vocab);
  const std::vector<int> text_ids = decode_text(prompt_ids, params, adapters, config, vocab);

  GenerationResult result;
  result.abstract_prompt = abstract;

  // Generated span sits between the prompt and the closing SPQ.
  text::TokenSequence detail;
  for (std::size_t i = prompt_ids.size(); i + 1 < text_ids.size(); ++i) {
    detail.append(text_ids[i], text::Segment::Detailed);
  }
  result.detailed_prompt = text::detokenize(detail, vocab);

  result.pose_tokens = decode_pose_tokens(text_ids, params, adapters);
  result.pose = vq::decode(result.pose_tokens, tokenizer);
  result.joints = geometry::forward_kinematics(result.pose, geometry::default_skeleton());
  return result;
}

model::TrainExample make_train_example(const std::string& abstract, const std::string& detailed,
                                       const geometry::PoseParams& pose,
                                       const text::SharedVocabulary& vocab,
                                       const vq::TokenizerParams& tokenizer) {
  const auto abstract_toks = text::tokenize(abstract, vocab, text::Segment::Abstract);
  const auto detailed_toks = text::tokenize(detailed, vocab, text::Segment::Detailed);
  if (abstract_toks.ids.empty()) throw std::invalid_argument("abstract prompt has no tokens");
  if (detailed_toks.ids.empty()) throw std::invalid_argument("detailed prompt has no tokens");

  model::TrainExample ex;
  ex.text_ids.reserve(abstract_toks.ids.size() + detailed_toks.ids.size() + 2);
  ex.text_ids.push_back(text::SharedVocabulary::kBos);
  ex.text_ids.insert(ex.text_ids.end(), abstract_toks.ids.begin(), abstract_toks.ids.end());
  ex.supervised_from = static_cast<int>(ex.text_ids.size()) - 1;
  ex.text_ids.insert(ex.text_ids.end(), detailed_toks.ids.begin(), detailed_toks.ids.end());
  ex.text_ids.push_back(text::SharedVocabulary::kSpq);
  ex.pose_targets = vq::encode(pose, tokenizer);
  return ex;
}

nlohmann::json to_json(const GenerationResult& result) {
  const Eigen::VectorXd pose_flat = result.pose.to_flat();
  const Eigen::VectorXd joints_flat = result.joints.to_flat();
  nlohmann::json j;
  j["abstract_prompt"] = result.abstract_prompt;
  j["detailed_prompt"] = result.detailed_prompt;
  j["pose_tokens"] = result.pose_tokens;
  j["pose"] = std::vector<double>(pose_flat.data(), pose_flat.data() + pose_flat.size());
  j["joints"] = std::vector<double>(joints_flat.data(), joints_flat.data() + joints_flat.size());
  return j;
}

}  // namespace posegen::gen
