#include "posegen/pose_tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "posegen/checkpoint.hpp"
#include "posegen/rng.hpp"

namespace posegen::vq {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;

namespace {

MatrixXd xavier(int rows, int cols, rng::Engine& eng) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng::uniform(eng, -bound, bound);
  return m;
}

void require_ready(const TokenizerParams& params) {
  if (!params.initialized)
    throw std::runtime_error("tokenizer: params not trained or initialized");
}

}  // namespace

TokenizerParams init_tokenizer(const TokenizerConfig& config, std::uint64_t seed) {
  if (config.codebook_size < 2) throw std::invalid_argument("tokenizer: codebook_size must be >= 2");
  if (config.latent_dim < 1 || config.n_tokens < 1 || config.hidden < 1)
    throw std::invalid_argument("tokenizer: bad architecture sizes");
  rng::Engine eng(seed);
  TokenizerParams p;
  p.config = config;
  const int ld = config.latent_dim * config.n_tokens;
  p.enc_w1 = xavier(geometry::kPoseDim, config.hidden, eng);
  p.enc_b1 = MatrixXd::Zero(1, config.hidden);
  p.enc_w2 = xavier(config.hidden, ld, eng);
  p.enc_b2 = MatrixXd::Zero(1, ld);
  p.dec_w1 = xavier(ld, config.hidden, eng);
  p.dec_b1 = MatrixXd::Zero(1, config.hidden);
  p.dec_w2 = xavier(config.hidden, geometry::kPoseDim, eng);
  p.dec_b2 = MatrixXd::Zero(1, geometry::kPoseDim);
  p.codebook.entries = MatrixXd(config.codebook_size, config.latent_dim);
  for (int k = 0; k < config.codebook_size; ++k)
    for (int c = 0; c < config.latent_dim; ++c)
      p.codebook.entries(k, c) = rng::normal(eng, 0.0, 0.5);
  p.codebook.usage_counts.assign(config.codebook_size, 0);
  p.initialized = true;
  return p;
}

int nearest_entry(const RowVectorXd& latent, const MatrixXd& entries) {
  int best = 0;
  double best_d2 = (entries.row(0) - latent).squaredNorm();
  for (int k = 1; k < entries.rows(); ++k) {
    const double d2 = (entries.row(k) - latent).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = k;
    }
  }
  return best;
}

MatrixXd encoder_latents(const geometry::PoseParams& pose, const TokenizerParams& params) {
  require_ready(params);
  const auto& cfg = params.config;
  const RowVectorXd x = pose.to_flat().transpose();
  const RowVectorXd h = (x * params.enc_w1 + params.enc_b1.row(0)).array().tanh();
  const RowVectorXd z = h * params.enc_w2 + params.enc_b2.row(0);
  MatrixXd latents(cfg.n_tokens, cfg.latent_dim);
  for (int l = 0; l < cfg.n_tokens; ++l)
    latents.row(l) = z.segment(l * cfg.latent_dim, cfg.latent_dim);
  return latents;
}

PoseTokenSequence encode(const geometry::PoseParams& pose, const TokenizerParams& params) {
  const MatrixXd latents = encoder_latents(pose, params);
  PoseTokenSequence tokens(params.config.n_tokens);
  for (int l = 0; l < params.config.n_tokens; ++l)
    tokens[l] = nearest_entry(latents.row(l), params.codebook.entries);
  return tokens;
}

geometry::PoseParams decode(const PoseTokenSequence& tokens, const TokenizerParams& params) {
  require_ready(params);
  const auto& cfg = params.config;
  if (static_cast<int>(tokens.size()) != cfg.n_tokens)
    throw std::invalid_argument("decode: expected " + std::to_string(cfg.n_tokens) +
                                " tokens, got " + std::to_string(tokens.size()));
  RowVectorXd zq(cfg.n_tokens * cfg.latent_dim);
  for (int l = 0; l < cfg.n_tokens; ++l) {
    const int k = tokens[l];
    if (k < 0 || k >= cfg.codebook_size)
      throw std::out_of_range("decode: invalid token " + std::to_string(k) + " at slot " +
                              std::to_string(l));
    zq.segment(l * cfg.latent_dim, cfg.latent_dim) = params.codebook.entries.row(k);
  }
  const RowVectorXd h = (zq * params.dec_w1 + params.dec_b1.row(0)).array().tanh();
  const RowVectorXd y = h * params.dec_w2 + params.dec_b2.row(0);
  return geometry::PoseParams::from_flat(y.transpose());
}

double reconstruction_mse(const RowVectorXd& a, const RowVectorXd& b) {
  if (a.size() != b.size()) throw std::invalid_argument("reconstruction_mse: size mismatch");
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

VqForwardCache vq_forward(const geometry::PoseParams& pose, const TokenizerParams& params) {
  require_ready(params);
  const auto& cfg = params.config;
  VqForwardCache cache;
  cache.x = pose.to_flat().transpose();
  cache.enc_h = (cache.x * params.enc_w1 + params.enc_b1.row(0)).array().tanh();
  const RowVectorXd z = cache.enc_h * params.enc_w2 + params.enc_b2.row(0);
  cache.latents.resize(cfg.n_tokens, cfg.latent_dim);
  cache.quantized.resize(cfg.n_tokens, cfg.latent_dim);
  cache.indices.resize(cfg.n_tokens);
  for (int l = 0; l < cfg.n_tokens; ++l) {
    cache.latents.row(l) = z.segment(l * cfg.latent_dim, cfg.latent_dim);
    cache.indices[l] = nearest_entry(cache.latents.row(l), params.codebook.entries);
    cache.quantized.row(l) = params.codebook.entries.row(cache.indices[l]);
  }
  RowVectorXd zq(cfg.n_tokens * cfg.latent_dim);
  for (int l = 0; l < cfg.n_tokens; ++l)
    zq.segment(l * cfg.latent_dim, cfg.latent_dim) = cache.quantized.row(l);
  cache.dec_h = (zq * params.dec_w1 + params.dec_b1.row(0)).array().tanh();
  cache.y = cache.dec_h * params.dec_w2 + params.dec_b2.row(0);

  const double n_latent = static_cast<double>(cfg.n_tokens * cfg.latent_dim);
  cache.losses.reconstruction = reconstruction_mse(cache.y, cache.x);
  cache.losses.codebook = (cache.quantized - cache.latents).squaredNorm() / n_latent;
  cache.losses.commitment = cfg.beta * (cache.latents - cache.quantized).squaredNorm() / n_latent;
  return cache;
}

VqLosses vq_losses(const geometry::PoseParams& pose, const TokenizerParams& params) {
  return vq_forward(pose, params).losses;
}

TokenizerParams zeros_like(const TokenizerParams& params) {
  TokenizerParams z = params;
  z.visit([](const char*, MatrixXd& m) { m.setZero(); });
  std::fill(z.codebook.usage_counts.begin(), z.codebook.usage_counts.end(), 0);
  return z;
}

void vq_backward(const VqForwardCache& cache, const TokenizerParams& params,
                 TokenizerParams& grads, VqBackwardExtras* extras) {
  const auto& cfg = params.config;
  const double n_latent = static_cast<double>(cfg.n_tokens * cfg.latent_dim);

  // reconstruction: mean over the 72 outputs
  const RowVectorXd dy = 2.0 / geometry::kPoseDim * (cache.y - cache.x);
  grads.dec_w2 += cache.dec_h.transpose() * dy;
  grads.dec_b2.row(0) += dy;
  const RowVectorXd dh2 =
      ((dy * params.dec_w2.transpose()).array() * (1.0 - cache.dec_h.array().square())).matrix();
  RowVectorXd zq_flat(cfg.n_tokens * cfg.latent_dim);
  for (int l = 0; l < cfg.n_tokens; ++l)
    zq_flat.segment(l * cfg.latent_dim, cfg.latent_dim) = cache.quantized.row(l);
  grads.dec_w1 += zq_flat.transpose() * dh2;
  grads.dec_b1.row(0) += dh2;
  const RowVectorXd dzq = dh2 * params.dec_w1.transpose();

  // straight-through: the encoder latents take the quantized latents'
  // reconstruction gradient verbatim
  MatrixXd dzq_rows(cfg.n_tokens, cfg.latent_dim);
  for (int l = 0; l < cfg.n_tokens; ++l)
    dzq_rows.row(l) = dzq.segment(l * cfg.latent_dim, cfg.latent_dim);
  MatrixXd dz_e = dzq_rows;
  if (extras) {
    extras->recon_grad_quantized = dzq_rows;
    extras->recon_grad_latents = dz_e;
  }

  // commitment pulls latents toward their (frozen) codebook rows
  dz_e += (2.0 * cfg.beta / n_latent) * (cache.latents - cache.quantized);

  // codebook term updates only the assigned entries
  for (int l = 0; l < cfg.n_tokens; ++l)
    grads.codebook.entries.row(cache.indices[l]) +=
        (2.0 / n_latent) * (cache.quantized.row(l) - cache.latents.row(l));

  RowVectorXd dz(cfg.n_tokens * cfg.latent_dim);
  for (int l = 0; l < cfg.n_tokens; ++l)
    dz.segment(l * cfg.latent_dim, cfg.latent_dim) = dz_e.row(l);
  grads.enc_w2 += cache.enc_h.transpose() * dz;
  grads.enc_b2.row(0) += dz;
  const RowVectorXd dh1 =
      ((dz * params.enc_w2.transpose()).array() * (1.0 - cache.enc_h.array().square())).matrix();
  grads.enc_w1 += cache.x.transpose() * dh1;
  grads.enc_b1.row(0) += dh1;
}

namespace {

void bootstrap_codebook(TokenizerParams& params, const std::vector<geometry::PoseParams>& corpus,
                        rng::Engine& eng) {
  const auto& cfg = params.config;
  std::vector<Eigen::RowVectorXd> rows;
  const int max_poses = std::min<int>(static_cast<int>(corpus.size()), 64);
  for (int i = 0; i < max_poses; ++i) {
    const MatrixXd lat = encoder_latents(corpus[i], params);
    for (int l = 0; l < lat.rows(); ++l) rows.push_back(lat.row(l));
  }
  for (int k = 0; k < cfg.codebook_size; ++k) {
    const int pick = rng::uniform_int(eng, 0, static_cast<int>(rows.size()) - 1);
    params.codebook.entries.row(k) = rows[pick];
    // tiny jitter keeps entries distinct even when rows repeat
    for (int c = 0; c < cfg.latent_dim; ++c)
      params.codebook.entries(k, c) += 1e-4 * rng::normal(eng);
  }
}

double corpus_recon_mse(const std::vector<geometry::PoseParams>& corpus,
                        const TokenizerParams& params) {
  double total = 0;
  for (const auto& pose : corpus) {
    const RowVectorXd x = pose.to_flat().transpose();
    const RowVectorXd y = decode(encode(pose, params), params).to_flat().transpose();
    total += reconstruction_mse(y, x);
  }
  return total / static_cast<double>(corpus.size());
}

}  // namespace

TokenizerTrainResult train_tokenizer(const std::vector<geometry::PoseParams>& corpus,
                                     const TokenizerTrainConfig& config) {
  if (corpus.empty()) throw std::invalid_argument("train_tokenizer: empty corpus");
  rng::Engine eng(config.seed);
  TokenizerTrainResult result;
  TokenizerParams params = init_tokenizer(config.arch, config.seed);
  bootstrap_codebook(params, corpus, eng);

  double lr = config.lr;
  constexpr double kMinLr = 1e-12;
  constexpr int kPatience = 25;  // epochs without improvement before annealing
  double best_err = corpus_recon_mse(corpus, params);
  TokenizerParams best = params;
  int since_improve = 0;

  std::vector<int> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  const int batch = std::max(1, config.batch);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), eng);
    std::vector<std::int64_t> epoch_usage(config.arch.codebook_size, 0);
    double sum_cb = 0, sum_commit = 0;
    bool nan_hit = false;

    for (std::size_t start = 0; start < order.size() && !nan_hit; start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      TokenizerParams grads = zeros_like(params);
      for (std::size_t i = start; i < end; ++i) {
        const VqForwardCache cache = vq_forward(corpus[order[i]], params);
        if (!std::isfinite(cache.losses.total())) {
          nan_hit = true;
          break;
        }
        vq_backward(cache, params, grads);
        for (int idx : cache.indices) ++epoch_usage[idx];
        sum_cb += cache.losses.codebook;
        sum_commit += cache.losses.commitment;
      }
      if (nan_hit) break;
      const double scale = lr / static_cast<double>(end - start);
      params.enc_w1 -= scale * grads.enc_w1;
      params.enc_b1 -= scale * grads.enc_b1;
      params.enc_w2 -= scale * grads.enc_w2;
      params.enc_b2 -= scale * grads.enc_b2;
      params.dec_w1 -= scale * grads.dec_w1;
      params.dec_b1 -= scale * grads.dec_b1;
      params.dec_w2 -= scale * grads.dec_w2;
      params.dec_b2 -= scale * grads.dec_b2;
      params.codebook.entries -= scale * grads.codebook.entries;
    }

    if (nan_hit) {
      result.params = best;
      result.diverged = true;
      result.message = "training loss became non-finite at epoch " + std::to_string(epoch);
      return result;
    }

    for (int k = 0; k < config.arch.codebook_size; ++k)
      params.codebook.usage_counts[k] += epoch_usage[k];

    // reseed entries unused for the whole epoch to a random corpus latent
    for (int k = 0; k < config.arch.codebook_size; ++k) {
      if (epoch_usage[k] != 0) continue;
      const int pick = rng::uniform_int(eng, 0, static_cast<int>(corpus.size()) - 1);
      const MatrixXd lat = encoder_latents(corpus[pick], params);
      const int row = rng::uniform_int(eng, 0, static_cast<int>(lat.rows()) - 1);
      params.codebook.entries.row(k) = lat.row(row);
    }

    const double err = corpus_recon_mse(corpus, params);
    if (!std::isfinite(err)) {
      result.params = best;
      result.diverged = true;
      result.message = "corpus reconstruction error became non-finite at epoch " +
                       std::to_string(epoch);
      return result;
    }
    if (err < best_err) {
      best_err = err;
      best = params;
      since_improve = 0;
      result.log.push_back({epoch, err, sum_cb / static_cast<double>(corpus.size()),
                            sum_commit / static_cast<double>(corpus.size()), lr});
      if (config.early_stop_recon > 0 && err < config.early_stop_recon) break;
    } else if (++since_improve >= kPatience) {
      params = best;  // restart from the best point, slower
      lr *= 0.5;
      since_improve = 0;
      if (lr < kMinLr) break;
    }
  }

  result.params = best;
  return result;
}

void save_tokenizer(const TokenizerParams& params, const std::string& path) {
  io::Checkpoint ckpt;
  ckpt.meta["kind"] = "pose-tokenizer";
  ckpt.meta["codebook_size"] = params.config.codebook_size;
  ckpt.meta["latent_dim"] = params.config.latent_dim;
  ckpt.meta["n_tokens"] = params.config.n_tokens;
  ckpt.meta["hidden"] = params.config.hidden;
  ckpt.meta["beta"] = params.config.beta;
  const_cast<TokenizerParams&>(params).visit(
      [&](const char* name, MatrixXd& m) { ckpt.add(name, m); });
  save_checkpoint(ckpt, path);
}

TokenizerParams load_tokenizer(const std::string& path) {
  const io::Checkpoint ckpt = io::load_checkpoint(path);
  if (ckpt.meta.value("kind", "") != "pose-tokenizer")
    throw std::runtime_error("not a tokenizer checkpoint: " + path);
  TokenizerConfig cfg;
  cfg.codebook_size = ckpt.meta.at("codebook_size");
  cfg.latent_dim = ckpt.meta.at("latent_dim");
  cfg.n_tokens = ckpt.meta.at("n_tokens");
  cfg.hidden = ckpt.meta.at("hidden");
  cfg.beta = ckpt.meta.at("beta");
  TokenizerParams p;
  p.config = cfg;
  p.visit([&](const char* name, MatrixXd& m) { m = ckpt.get(name); });
  p.codebook.usage_counts.assign(cfg.codebook_size, 0);
  p.initialized = true;
  return p;
}

}  // namespace posegen::vq
