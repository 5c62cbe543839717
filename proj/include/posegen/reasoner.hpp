#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "posegen/pose_tokenizer.hpp"
#include "posegen/rng.hpp"
#include "posegen/text_codec.hpp"

namespace posegen::model {

/// true = may attend. Text rows are causal; query rows attend to all text
/// and all queries; no text row sees a query column.
using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

Mask build_mask(int text_len, int n_queries);

struct ModelConfig {
  int layers = 4;
  int heads = 4;
  int width = 128;
  int mlp = 0;  // 0 resolves to 4*width at init
  int vocab = 0;  // full shared id space V, set from the vocabulary
  int n_pose_codes = 256;  // K
  int n_queries = 80;
  int context = 512;  // max text+query positions
  double rms_eps = 1e-6;
};

struct LayerParams {
  Eigen::MatrixXd ln1_g, ln2_g;  // 1 x width gains
  Eigen::MatrixXd wq, wk, wv, wo;  // width x width
  Eigen::MatrixXd w_gate, w_up;    // width x mlp
  Eigen::MatrixXd w_down;          // mlp x width
};

/// Decoder-only transformer, pre-RMSNorm, SiLU-gated MLP, no biases,
/// row-vector convention (y = x * W). Text positions use learned absolute
/// positional embeddings; the n_queries pose slots share the PQ token
/// embedding plus a per-slot learned positional embedding.
struct ModelParams {
  ModelConfig config;
  Eigen::MatrixXd token_emb;  // V x width
  Eigen::MatrixXd text_pos;   // context x width
  Eigen::MatrixXd query_pos;  // n_queries x width
  std::vector<LayerParams> layers;
  Eigen::MatrixXd ln_f_g;     // 1 x width
  Eigen::MatrixXd text_head;  // width x V
  Eigen::MatrixXd pose_head;  // width x K
  bool initialized = false;

  template <class F>
  void visit(F&& f) {
    f("token_emb", token_emb);
    f("text_pos", text_pos);
    f("query_pos", query_pos);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      f((p + "ln1_g").c_str(), layers[l].ln1_g);
      f((p + "wq").c_str(), layers[l].wq);
      f((p + "wk").c_str(), layers[l].wk);
      f((p + "wv").c_str(), layers[l].wv);
      f((p + "wo").c_str(), layers[l].wo);
      f((p + "ln2_g").c_str(), layers[l].ln2_g);
      f((p + "w_gate").c_str(), layers[l].w_gate);
      f((p + "w_up").c_str(), layers[l].w_up);
      f((p + "w_down").c_str(), layers[l].w_down);
    }
    f("ln_f_g", ln_f_g);
    f("text_head", text_head);
    f("pose_head", pose_head);
  }
};

struct LoraConfig {
  bool enabled = false;
  int rank = 64;
  double alpha = 16.0;
  double dropout = 0.05;

  double scale() const { return alpha / static_cast<double>(rank); }
};

/// One adapted matrix: effective weight is W + scale * a * b, with a random
/// at init and b zero so adapters start as the identity update.
struct LoraPair {
  Eigen::MatrixXd a;  // in x r
  Eigen::MatrixXd b;  // r x out
};

struct LayerAdapters {
  LoraPair wq, wk, wv, wo, w_gate, w_up, w_down;
};

struct LoraAdapterSet {
  LoraConfig config;
  std::vector<LayerAdapters> layers;

  template <class F>
  void visit(F&& f) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      auto pair = [&](const char* n, LoraPair& lp) {
        f((p + n + ".a").c_str(), lp.a);
        f((p + n + ".b").c_str(), lp.b);
      };
      pair("wq", layers[l].wq);
      pair("wk", layers[l].wk);
      pair("wv", layers[l].wv);
      pair("wo", layers[l].wo);
      pair("w_gate", layers[l].w_gate);
      pair("w_up", layers[l].w_up);
      pair("w_down", layers[l].w_down);
    }
  }
};

ModelParams init_model(const ModelConfig& config, std::uint64_t seed);
LoraAdapterSet init_adapters(const ModelConfig& arch, const LoraConfig& config,
                             std::uint64_t seed);

ModelParams zeros_like(const ModelParams& params);
LoraAdapterSet zeros_like(const LoraAdapterSet& adapters);

struct ForwardResult {
  Eigen::MatrixXd text_logits;  // S x V
  Eigen::MatrixXd pose_logits;  // n_queries x K
};

struct LayerCache {
  Eigen::MatrixXd x_in, n1;
  Eigen::MatrixXd q, k, v;              // P x width
  std::vector<Eigen::MatrixXd> probs;   // per head, P x P
  Eigen::MatrixXd attn_concat, attn_out, x_mid, n2;
  Eigen::MatrixXd gate, up, act, mlp_out;
  // dropout multipliers for the LoRA branch inputs (empty when off)
  Eigen::MatrixXd drop_q, drop_k, drop_v, drop_o, drop_gate, drop_up, drop_down;
};

struct ForwardCache {
  std::vector<int> ids;
  int text_len = 0;
  int total = 0;
  Mask mask;
  Eigen::MatrixXd x0;
  std::vector<LayerCache> layers;
  Eigen::MatrixXd n_f;
  ForwardResult out;
};

/// Deterministic evaluation pass (dropout off).
ForwardResult forward(const std::vector<int>& text_ids, const ModelParams& params,
                      const LoraAdapterSet* adapters = nullptr);

/// Training pass; when `dropout_eng` is non-null and the adapter config has a
/// positive rate, fresh dropout masks are drawn for every LoRA branch input.
ForwardResult forward_train(const std::vector<int>& text_ids, const ModelParams& params,
                            const LoraAdapterSet* adapters, rng::Engine* dropout_eng,
                            ForwardCache& cache);

/// Accumulates gradients of the given logit gradients into `param_grads`
/// (and `adapter_grads` when adapters are active).
void backward(const ForwardCache& cache, const Eigen::MatrixXd& d_text_logits,
              const Eigen::MatrixXd& d_pose_logits, const ModelParams& params,
              const LoraAdapterSet* adapters, ModelParams& param_grads,
              LoraAdapterSet* adapter_grads);

/// Mean negative log-likelihood of `targets` under rows of `logits`.
/// Row t of `logits` scores target t. Optional softmax-minus-onehot gradient.
double nll_mean(const Eigen::MatrixXd& logits, const std::vector<int>& targets,
                Eigen::MatrixXd* d_logits = nullptr);

/// Text loss over the supervised span (detailed tokens plus the closing SPQ).
double loss_text(const Eigen::MatrixXd& logits, const std::vector<int>& targets,
                 Eigen::MatrixXd* d_logits = nullptr);

/// Pose loss over all query slots, each a categorical over the K pose codes.
double loss_pose(const Eigen::MatrixXd& pose_logits, const vq::PoseTokenSequence& targets,
                 Eigen::MatrixXd* d_logits = nullptr);

/// One training unit: encoded text ids [BOS, abstract..., detailed..., SPQ],
/// the first supervised logit row (the last abstract position, which predicts
/// the first detailed token), and the quantized target pose.
struct TrainExample {
  std::vector<int> text_ids;
  int supervised_from = 0;
  vq::PoseTokenSequence pose_targets;
};

struct TrainConfig {
  double lr = 5e-5;
  double momentum = 0.0;
  int batch = 8;
  int epochs = 5;
  double w_text = 1.0;
  double w_pose = 1.0;
  LoraConfig lora;  // lora.enabled switches between full and adapter training
  std::uint64_t seed = 0;
};

struct TrainEpochLog {
  int epoch;
  double text_loss;
  double pose_loss;
};

struct TrainResult {
  ModelParams params;
  LoraAdapterSet adapters;
  std::vector<TrainEpochLog> log;
  bool diverged = false;
  std::string message;
};

/// SGD with optional momentum on L = w_text * L_text + w_pose * L_pose.
/// LoRA mode updates adapters and the two heads only; every base array stays
/// bitwise untouched. A non-finite loss aborts with the last epoch's params.
TrainResult train(const std::vector<TrainExample>& dataset, const ModelParams& init,
                  const TrainConfig& config);

void save_model(const ModelParams& params, const LoraAdapterSet* adapters,
                const std::string& path);

struct LoadedModel {
  ModelParams params;
  LoraAdapterSet adapters;
  bool has_adapters = false;
};

LoadedModel load_model(const std::string& path);

}  // namespace posegen::model
