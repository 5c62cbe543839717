#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "posegen/geometry.hpp"

namespace posegen::vq {

/// 80 discrete codebook indices representing one pose.
using PoseTokenSequence = std::vector<int>;

struct TokenizerConfig {
  int codebook_size = 256;  // K
  int latent_dim = 32;      // d
  int n_tokens = 80;        // L
  int hidden = 128;         // MLP width of encoder and decoder
  double beta = 0.25;       // commitment weight
};

struct Codebook {
  Eigen::MatrixXd entries;               // K x d
  std::vector<std::int64_t> usage_counts;  // cumulative assignments during training
};

/// Encoder (72 -> hidden -> L*d, tanh hidden), decoder (L*d -> hidden -> 72)
/// and the codebook. Biases are stored as 1-row matrices so that visit()
/// exposes every parameter array uniformly.
struct TokenizerParams {
  TokenizerConfig config;
  Eigen::MatrixXd enc_w1, enc_b1, enc_w2, enc_b2;
  Eigen::MatrixXd dec_w1, dec_b1, dec_w2, dec_b2;
  Codebook codebook;
  bool initialized = false;

  template <class F>
  void visit(F&& f) {
    f("enc_w1", enc_w1);
    f("enc_b1", enc_b1);
    f("enc_w2", enc_w2);
    f("enc_b2", enc_b2);
    f("dec_w1", dec_w1);
    f("dec_b1", dec_b1);
    f("dec_w2", dec_w2);
    f("dec_b2", dec_b2);
    f("codebook", codebook.entries);
  }
};

struct VqLosses {
  double reconstruction = 0;
  double codebook = 0;
  double commitment = 0;
  double total() const { return reconstruction + codebook + commitment; }
};

struct VqForwardCache {
  Eigen::RowVectorXd x;       // 1 x 72 input pose
  Eigen::RowVectorXd enc_h;   // tanh hidden
  Eigen::MatrixXd latents;    // L x d encoder output z_e
  PoseTokenSequence indices;  // nearest entry per row
  Eigen::MatrixXd quantized;  // L x d codebook rows z_q
  Eigen::RowVectorXd dec_h;
  Eigen::RowVectorXd y;       // 1 x 72 reconstruction
  VqLosses losses;
};

/// Filled by vq_backward for straight-through instrumentation: the encoder
/// latents receive, bit for bit, the reconstruction gradient of the
/// quantized latents.
struct VqBackwardExtras {
  Eigen::MatrixXd recon_grad_quantized;
  Eigen::MatrixXd recon_grad_latents;
};

TokenizerParams init_tokenizer(const TokenizerConfig& config, std::uint64_t seed);

/// Nearest codebook row by squared Euclidean distance; ties break low.
int nearest_entry(const Eigen::RowVectorXd& latent, const Eigen::MatrixXd& entries);

Eigen::MatrixXd encoder_latents(const geometry::PoseParams& pose, const TokenizerParams& params);

PoseTokenSequence encode(const geometry::PoseParams& pose, const TokenizerParams& params);
geometry::PoseParams decode(const PoseTokenSequence& tokens, const TokenizerParams& params);

VqForwardCache vq_forward(const geometry::PoseParams& pose, const TokenizerParams& params);
VqLosses vq_losses(const geometry::PoseParams& pose, const TokenizerParams& params);

/// Accumulates gradients of the three-term objective into `grads` (same
/// shape as params, zero-initialized by caller). The reconstruction path
/// flows through the quantization bottleneck by the straight-through rule;
/// codebook entries receive only the codebook-term gradient.
void vq_backward(const VqForwardCache& cache, const TokenizerParams& params,
                 TokenizerParams& grads, VqBackwardExtras* extras = nullptr);

double reconstruction_mse(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b);

TokenizerParams zeros_like(const TokenizerParams& params);

struct TokenizerTrainConfig {
  TokenizerConfig arch;
  double lr = 1e-3;
  int epochs = 200;
  int batch = 8;
  std::uint64_t seed = 0;
  double early_stop_recon = 0.0;  // stop once corpus recon MSE drops below; 0 disables
};

struct TokenizerEpochLog {
  int epoch;
  double recon_mse;  // corpus mean, end of epoch
  double codebook;
  double commitment;
  double lr;
};

struct TokenizerTrainResult {
  TokenizerParams params;  // last good checkpoint
  std::vector<TokenizerEpochLog> log;
  bool diverged = false;
  std::string message;
};

/// Plain SGD tracking the best-so-far snapshot. Only improvements are
/// logged, so the logged error curve decreases monotonically; a long
/// stretch without improvement restarts from the best snapshot at half
/// the learning rate. A NaN loss aborts with the best params.
TokenizerTrainResult train_tokenizer(const std::vector<geometry::PoseParams>& corpus,
                                     const TokenizerTrainConfig& config);

void save_tokenizer(const TokenizerParams& params, const std::string& path);
TokenizerParams load_tokenizer(const std::string& path);

}  // namespace posegen::vq
