#include "posegen/reasoner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "posegen/checkpoint.hpp"

namespace posegen::model {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;

Mask build_mask(int text_len, int n_queries) {
  if (text_len < 1) throw std::invalid_argument("build_mask: text_len must be >= 1");
  if (n_queries < 0) throw std::invalid_argument("build_mask: n_queries must be >= 0");
  const int total = text_len + n_queries;
  Mask mask = Mask::Constant(total, total, false);
  for (int i = 0; i < text_len; ++i)
    for (int j = 0; j <= i; ++j) mask(i, j) = true;
  for (int i = text_len; i < total; ++i)
    for (int j = 0; j < total; ++j) mask(i, j) = true;
  return mask;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

MatrixXd xavier(int rows, int cols, rng::Engine& eng) {
  const double bound = std::sqrt(6.0 / (rows + cols));
  MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng::uniform(eng, -bound, bound);
  return m;
}

MatrixXd gaussian(int rows, int cols, double stddev, rng::Engine& eng) {
  MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng::normal(eng, 0.0, stddev);
  return m;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double silu(double z) { return z * sigmoid(z); }

double silu_grad(double z) {
  const double s = sigmoid(z);
  return s * (1.0 + z * (1.0 - s));
}

void check_config(const ModelConfig& c) {
  if (c.layers < 1 || c.heads < 1 || c.width < 1) throw std::invalid_argument("model: bad sizes");
  if (c.width % c.heads != 0) throw std::invalid_argument("model: heads must divide width");
  if (c.vocab <= text::SharedVocabulary::kNumSpecials)
    throw std::invalid_argument("model: vocab must cover the specials");
  if (c.n_pose_codes < 2) throw std::invalid_argument("model: need at least 2 pose codes");
  if (c.n_queries < 1) throw std::invalid_argument("model: need at least 1 query slot");
  if (c.context < 2) throw std::invalid_argument("model: context too small");
}

// y = x / rms(x) * g, rowwise
MatrixXd rmsnorm(const MatrixXd& x, const MatrixXd& g, double eps) {
  MatrixXd y(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    const double r = std::sqrt(x.row(i).squaredNorm() / x.cols() + eps);
    y.row(i) = (x.row(i) / r).cwiseProduct(g.row(0));
  }
  return y;
}

// accumulates dg, returns dx
MatrixXd rmsnorm_backward(const MatrixXd& dy, const MatrixXd& x, const MatrixXd& g, double eps,
                          MatrixXd& dg) {
  const int d = static_cast<int>(x.cols());
  MatrixXd dx(x.rows(), d);
  for (int i = 0; i < x.rows(); ++i) {
    const double r = std::sqrt(x.row(i).squaredNorm() / d + eps);
    dg.row(0) += dy.row(i).cwiseProduct(x.row(i) / r);
    const RowVectorXd t = dy.row(i).cwiseProduct(g.row(0));
    const double proj = t.dot(x.row(i)) / (d * r * r * r);
    dx.row(i) = t / r - x.row(i) * proj;
  }
  return dx;
}

// y = x*W, plus the scaled low-rank branch when an adapter is present.
// `drop` holds per-entry multipliers for the branch input (training only).
MatrixXd adapted_mul(const MatrixXd& x, const MatrixXd& w, const LoraPair* lp, double scale,
                     const MatrixXd* drop) {
  MatrixXd y = x * w;
  if (lp) {
    if (drop && drop->size() > 0)
      y.noalias() += scale * (((x.array() * drop->array()).matrix() * lp->a) * lp->b);
    else
      y.noalias() += scale * ((x * lp->a) * lp->b);
  }
  return y;
}

// accumulates dW (and da/db when adapting); returns dx
MatrixXd adapted_mul_backward(const MatrixXd& x, const MatrixXd& w, const LoraPair* lp,
                              double scale, const MatrixXd* drop, const MatrixXd& dy,
                              MatrixXd& dw, LoraPair* dlp) {
  dw.noalias() += x.transpose() * dy;
  MatrixXd dx = dy * w.transpose();
  if (lp) {
    const bool dropped = drop && drop->size() > 0;
    const MatrixXd xd = dropped ? MatrixXd((x.array() * drop->array()).matrix()) : x;
    const MatrixXd dyb = dy * lp->b.transpose();  // P x r
    if (dlp) {
      dlp->a.noalias() += scale * (xd.transpose() * dyb);
      dlp->b.noalias() += scale * ((xd * lp->a).transpose() * dy);
    }
    MatrixXd dxd = scale * (dyb * lp->a.transpose());
    if (dropped) dxd.array() *= drop->array();
    dx += dxd;
  }
  return dx;
}

MatrixXd dropout_multipliers(int rows, int cols, double rate, rng::Engine& eng) {
  MatrixXd m(rows, cols);
  const double keep = 1.0 - rate;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      m(r, c) = rng::uniform(eng, 0.0, 1.0) < keep ? 1.0 / keep : 0.0;
  return m;
}

// masked rows: probabilities are exactly zero, so masked positions cannot
// leak into the weighted sum even at the last bit
void masked_softmax_rows(MatrixXd& scores, const Mask& mask) {
  for (int i = 0; i < scores.rows(); ++i) {
    double mx = kNegInf;
    for (int j = 0; j < scores.cols(); ++j)
      if (mask(i, j)) mx = std::max(mx, scores(i, j));
    double sum = 0;
    for (int j = 0; j < scores.cols(); ++j) {
      if (mask(i, j)) {
        scores(i, j) = std::exp(scores(i, j) - mx);
        sum += scores(i, j);
      } else {
        scores(i, j) = 0.0;
      }
    }
    scores.row(i) /= sum;
  }
}

const LoraPair* pick(const LayerAdapters* la, const LoraPair LayerAdapters::* member) {
  return la ? &(la->*member) : nullptr;
}

ForwardResult run_forward(const std::vector<int>& ids, const ModelParams& params,
                          const LoraAdapterSet* adapters, rng::Engine* dropout_eng,
                          ForwardCache& cache) {
  if (!params.initialized) throw std::runtime_error("reasoner: params not initialized");
  const ModelConfig& cfg = params.config;
  const int s = static_cast<int>(ids.size());
  if (s < 1) throw std::invalid_argument("reasoner: empty input sequence");
  const int p = s + cfg.n_queries;
  if (p > cfg.context)
    throw std::length_error("reasoner: sequence of " + std::to_string(p) +
                            " positions exceeds context " + std::to_string(cfg.context));
  for (int id : ids)
    if (id < 0 || id >= cfg.vocab)
      throw std::out_of_range("reasoner: token id " + std::to_string(id) + " out of vocab");

  const bool adapting = adapters && adapters->config.enabled;
  if (adapting && static_cast<int>(adapters->layers.size()) != cfg.layers)
    throw std::invalid_argument("reasoner: adapter set does not match layer count");
  const double scale = adapting ? adapters->config.scale() : 0.0;
  const bool use_dropout = adapting && dropout_eng && adapters->config.dropout > 0.0;

  cache.ids = ids;
  cache.text_len = s;
  cache.total = p;
  cache.mask = build_mask(s, cfg.n_queries);
  cache.layers.assign(cfg.layers, LayerCache{});

  cache.x0.resize(p, cfg.width);
  for (int t = 0; t < s; ++t)
    cache.x0.row(t) = params.token_emb.row(ids[t]) + params.text_pos.row(t);
  for (int q = 0; q < cfg.n_queries; ++q)
    cache.x0.row(s + q) =
        params.token_emb.row(text::SharedVocabulary::kPq) + params.query_pos.row(q);

  const int dh = cfg.width / cfg.heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  MatrixXd x = cache.x0;
  for (int l = 0; l < cfg.layers; ++l) {
    const LayerParams& lp = params.layers[l];
    const LayerAdapters* la = adapting ? &adapters->layers[l] : nullptr;
    LayerCache& lc = cache.layers[l];
    lc.x_in = x;
    lc.n1 = rmsnorm(x, lp.ln1_g, cfg.rms_eps);

    if (use_dropout) {
      lc.drop_q = dropout_multipliers(p, cfg.width, adapters->config.dropout, *dropout_eng);
      lc.drop_k = dropout_multipliers(p, cfg.width, adapters->config.dropout, *dropout_eng);
      lc.drop_v = dropout_multipliers(p, cfg.width, adapters->config.dropout, *dropout_eng);
      lc.drop_o = dropout_multipliers(p, cfg.width, adapters->config.dropout, *dropout_eng);
    }
    lc.q = adapted_mul(lc.n1, lp.wq, pick(la, &LayerAdapters::wq), scale, &lc.drop_q);
    lc.k = adapted_mul(lc.n1, lp.wk, pick(la, &LayerAdapters::wk), scale, &lc.drop_k);
    lc.v = adapted_mul(lc.n1, lp.wv, pick(la, &LayerAdapters::wv), scale, &lc.drop_v);

    lc.probs.resize(cfg.heads);
    lc.attn_concat.resize(p, cfg.width);
    for (int h = 0; h < cfg.heads; ++h) {
      const auto qh = lc.q.middleCols(h * dh, dh);
      const auto kh = lc.k.middleCols(h * dh, dh);
      const auto vh = lc.v.middleCols(h * dh, dh);
      MatrixXd sc = (qh * kh.transpose()) * inv_sqrt_dh;
      masked_softmax_rows(sc, cache.mask);
      lc.probs[h] = std::move(sc);
      lc.attn_concat.middleCols(h * dh, dh) = lc.probs[h] * vh;
    }
    lc.attn_out =
        adapted_mul(lc.attn_concat, lp.wo, pick(la, &LayerAdapters::wo), scale, &lc.drop_o);
    lc.x_mid = lc.x_in + lc.attn_out;

    lc.n2 = rmsnorm(lc.x_mid, lp.ln2_g, cfg.rms_eps);
    if (use_dropout) {
      lc.drop_gate = dropout_multipliers(p, cfg.width, adapters->config.dropout, *dropout_eng);
      lc.drop_up = dropout_multipliers(p, cfg.width, adapters->config.dropout, *dropout_eng);
      lc.drop_down =
          dropout_multipliers(p, static_cast<int>(lp.w_down.rows()), adapters->config.dropout,
                              *dropout_eng);
    }
    lc.gate = adapted_mul(lc.n2, lp.w_gate, pick(la, &LayerAdapters::w_gate), scale,
                          &lc.drop_gate);
    lc.up = adapted_mul(lc.n2, lp.w_up, pick(la, &LayerAdapters::w_up), scale, &lc.drop_up);
    lc.act = lc.gate.unaryExpr([](double z) { return silu(z); }).cwiseProduct(lc.up);
    lc.mlp_out =
        adapted_mul(lc.act, lp.w_down, pick(la, &LayerAdapters::w_down), scale, &lc.drop_down);
    x = lc.x_mid + lc.mlp_out;
  }

  cache.n_f = rmsnorm(x, params.ln_f_g, cfg.rms_eps);
  cache.out.text_logits = cache.n_f.topRows(s) * params.text_head;
  cache.out.pose_logits = cache.n_f.bottomRows(cfg.n_queries) * params.pose_head;
  return cache.out;
}

}  // namespace

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  ModelConfig cfg = config;
  if (cfg.mlp <= 0) cfg.mlp = 4 * cfg.width;
  check_config(cfg);
  rng::Engine eng(seed);
  ModelParams p;
  p.config = cfg;
  p.token_emb = gaussian(cfg.vocab, cfg.width, 0.02, eng);
  p.text_pos = gaussian(cfg.context, cfg.width, 0.02, eng);
  p.query_pos = gaussian(cfg.n_queries, cfg.width, 0.02, eng);
  p.layers.resize(cfg.layers);
  for (auto& l : p.layers) {
    l.ln1_g = MatrixXd::Ones(1, cfg.width);
    l.ln2_g = MatrixXd::Ones(1, cfg.width);
    l.wq = xavier(cfg.width, cfg.width, eng);
    l.wk = xavier(cfg.width, cfg.width, eng);
    l.wv = xavier(cfg.width, cfg.width, eng);
    l.wo = xavier(cfg.width, cfg.width, eng);
    l.w_gate = xavier(cfg.width, cfg.mlp, eng);
    l.w_up = xavier(cfg.width, cfg.mlp, eng);
    l.w_down = xavier(cfg.mlp, cfg.width, eng);
  }
  p.ln_f_g = MatrixXd::Ones(1, cfg.width);
  p.text_head = xavier(cfg.width, cfg.vocab, eng);
  p.pose_head = xavier(cfg.width, cfg.n_pose_codes, eng);
  p.initialized = true;
  return p;
}

LoraAdapterSet init_adapters(const ModelConfig& arch, const LoraConfig& config,
                             std::uint64_t seed) {
  if (config.rank < 1) throw std::invalid_argument("lora: rank must be >= 1");
  if (config.dropout < 0.0 || config.dropout >= 1.0)
    throw std::invalid_argument("lora: dropout must be in [0, 1)");
  rng::Engine eng(seed);
  const int mlp = arch.mlp > 0 ? arch.mlp : 4 * arch.width;
  LoraAdapterSet set;
  set.config = config;
  set.layers.resize(arch.layers);
  auto make = [&](int in, int out) {
    LoraPair lp;
    lp.a = gaussian(in, config.rank, 0.02, eng);
    lp.b = MatrixXd::Zero(config.rank, out);
    return lp;
  };
  for (auto& la : set.layers) {
    la.wq = make(arch.width, arch.width);
    la.wk = make(arch.width, arch.width);
    la.wv = make(arch.width, arch.width);
    la.wo = make(arch.width, arch.width);
    la.w_gate = make(arch.width, mlp);
    la.w_up = make(arch.width, mlp);
    la.w_down = make(mlp, arch.width);
  }
  return set;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z = params;
  z.visit([](const char*, MatrixXd& m) { m.setZero(); });
  return z;
}

LoraAdapterSet zeros_like(const LoraAdapterSet& adapters) {
  LoraAdapterSet z = adapters;
  z.visit([](const char*, MatrixXd& m) { m.setZero(); });
  return z;
}

ForwardResult forward(const std::vector<int>& text_ids, const ModelParams& params,
                      const LoraAdapterSet* adapters) {
  ForwardCache cache;
  return run_forward(text_ids, params, adapters, nullptr, cache);
}

ForwardResult forward_train(const std::vector<int>& text_ids, const ModelParams& params,
                            const LoraAdapterSet* adapters, rng::Engine* dropout_eng,
                            ForwardCache& cache) {
  return run_forward(text_ids, params, adapters, dropout_eng, cache);
}

void backward(const ForwardCache& cache, const MatrixXd& d_text_logits,
              const MatrixXd& d_pose_logits, const ModelParams& params,
              const LoraAdapterSet* adapters, ModelParams& param_grads,
              LoraAdapterSet* adapter_grads) {
  const ModelConfig& cfg = params.config;
  const int s = cache.text_len;
  const int p = cache.total;
  const bool adapting = adapters && adapters->config.enabled;
  const double scale = adapting ? adapters->config.scale() : 0.0;
  const int dh = cfg.width / cfg.heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  // heads
  MatrixXd dn_f = MatrixXd::Zero(p, cfg.width);
  if (d_text_logits.size() > 0) {
    param_grads.text_head.noalias() += cache.n_f.topRows(s).transpose() * d_text_logits;
    dn_f.topRows(s) += d_text_logits * params.text_head.transpose();
  }
  if (d_pose_logits.size() > 0) {
    param_grads.pose_head.noalias() +=
        cache.n_f.bottomRows(cfg.n_queries).transpose() * d_pose_logits;
    dn_f.bottomRows(cfg.n_queries) += d_pose_logits * params.pose_head.transpose();
  }

  const MatrixXd x_last = cache.layers.back().x_mid + cache.layers.back().mlp_out;
  MatrixXd dx = rmsnorm_backward(dn_f, x_last, params.ln_f_g, cfg.rms_eps, param_grads.ln_f_g);

  for (int l = cfg.layers - 1; l >= 0; --l) {
    const LayerParams& lp = params.layers[l];
    const LayerCache& lc = cache.layers[l];
    LayerParams& gp = param_grads.layers[l];
    const LayerAdapters* la = adapting ? &adapters->layers[l] : nullptr;
    LayerAdapters* ga = (adapting && adapter_grads) ? &adapter_grads->layers[l] : nullptr;

    // x_out = x_mid + mlp_out
    const MatrixXd d_act =
        adapted_mul_backward(lc.act, lp.w_down, pick(la, &LayerAdapters::w_down), scale,
                             &lc.drop_down, dx, gp.w_down,
                             ga ? &ga->w_down : nullptr);
    const MatrixXd silu_gate = lc.gate.unaryExpr([](double z) { return silu(z); });
    const MatrixXd du = d_act.cwiseProduct(silu_gate);
    const MatrixXd dgate =
        d_act.cwiseProduct(lc.up)
            .cwiseProduct(lc.gate.unaryExpr([](double z) { return silu_grad(z); }));
    MatrixXd dn2 = adapted_mul_backward(lc.n2, lp.w_up, pick(la, &LayerAdapters::w_up), scale,
                                        &lc.drop_up, du, gp.w_up, ga ? &ga->w_up : nullptr);
    dn2 += adapted_mul_backward(lc.n2, lp.w_gate, pick(la, &LayerAdapters::w_gate), scale,
                                &lc.drop_gate, dgate, gp.w_gate,
                                ga ? &ga->w_gate : nullptr);

    MatrixXd dx_mid = dx;  // residual branch
    dx_mid += rmsnorm_backward(dn2, lc.x_mid, lp.ln2_g, cfg.rms_eps, gp.ln2_g);

    // x_mid = x_in + attn_out
    const MatrixXd d_concat =
        adapted_mul_backward(lc.attn_concat, lp.wo, pick(la, &LayerAdapters::wo), scale,
                             &lc.drop_o, dx_mid, gp.wo, ga ? &ga->wo : nullptr);
    MatrixXd dq = MatrixXd::Zero(p, cfg.width);
    MatrixXd dk = MatrixXd::Zero(p, cfg.width);
    MatrixXd dv = MatrixXd::Zero(p, cfg.width);
    for (int h = 0; h < cfg.heads; ++h) {
      const auto qh = lc.q.middleCols(h * dh, dh);
      const auto kh = lc.k.middleCols(h * dh, dh);
      const auto vh = lc.v.middleCols(h * dh, dh);
      const auto d_oh = d_concat.middleCols(h * dh, dh);
      const MatrixXd& probs = lc.probs[h];
      dv.middleCols(h * dh, dh).noalias() += probs.transpose() * d_oh;
      const MatrixXd dprobs = d_oh * vh.transpose();
      const Eigen::VectorXd row_dot = (dprobs.cwiseProduct(probs)).rowwise().sum();
      const MatrixXd dscores =
          probs.cwiseProduct(dprobs - row_dot.replicate(1, probs.cols()));
      dq.middleCols(h * dh, dh).noalias() += dscores * kh * inv_sqrt_dh;
      dk.middleCols(h * dh, dh).noalias() += dscores.transpose() * qh * inv_sqrt_dh;
    }
    MatrixXd dn1 = adapted_mul_backward(lc.n1, lp.wq, pick(la, &LayerAdapters::wq), scale,
                                        &lc.drop_q, dq, gp.wq, ga ? &ga->wq : nullptr);
    dn1 += adapted_mul_backward(lc.n1, lp.wk, pick(la, &LayerAdapters::wk), scale, &lc.drop_k,
                                dk, gp.wk, ga ? &ga->wk : nullptr);
    dn1 += adapted_mul_backward(lc.n1, lp.wv, pick(la, &LayerAdapters::wv), scale, &lc.drop_v,
                                dv, gp.wv, ga ? &ga->wv : nullptr);

    MatrixXd dx_in = dx_mid;  // residual branch
    dx_in += rmsnorm_backward(dn1, lc.x_in, lp.ln1_g, cfg.rms_eps, gp.ln1_g);
    dx = std::move(dx_in);
  }

  for (int t = 0; t < s; ++t) {
    param_grads.token_emb.row(cache.ids[t]) += dx.row(t);
    param_grads.text_pos.row(t) += dx.row(t);
  }
  for (int q = 0; q < cfg.n_queries; ++q) {
    param_grads.token_emb.row(text::SharedVocabulary::kPq) += dx.row(s + q);
    param_grads.query_pos.row(q) += dx.row(s + q);
  }
}

double nll_mean(const MatrixXd& logits, const std::vector<int>& targets, MatrixXd* d_logits) {
  const int n = static_cast<int>(logits.rows());
  if (n == 0 || static_cast<int>(targets.size()) != n)
    throw std::invalid_argument("nll_mean: need one target per logit row");
  if (d_logits) d_logits->setZero(n, logits.cols());
  double total = 0;
  for (int i = 0; i < n; ++i) {
    const int t = targets[i];
    if (t < 0 || t >= logits.cols())
      throw std::out_of_range("nll_mean: target " + std::to_string(t) + " out of range");
    const double mx = logits.row(i).maxCoeff();
    const RowVectorXd expd = (logits.row(i).array() - mx).exp().matrix();
    const double z = expd.sum();
    total += mx + std::log(z) - logits(i, t);
    if (d_logits) {
      d_logits->row(i) = expd / z;
      (*d_logits)(i, t) -= 1.0;
      d_logits->row(i) /= static_cast<double>(n);
    }
  }
  return total / static_cast<double>(n);
}

double loss_text(const MatrixXd& logits, const std::vector<int>& targets, MatrixXd* d_logits) {
  if (targets.empty()) throw std::invalid_argument("loss_text: empty detailed segment");
  return nll_mean(logits, targets, d_logits);
}

double loss_pose(const MatrixXd& pose_logits, const vq::PoseTokenSequence& targets,
                 MatrixXd* d_logits) {
  if (static_cast<int>(targets.size()) != pose_logits.rows())
    throw std::invalid_argument("loss_pose: expected " + std::to_string(pose_logits.rows()) +
                                " targets, got " + std::to_string(targets.size()));
  return nll_mean(pose_logits, targets, d_logits);
}

namespace {

void check_example(const TrainExample& ex, const ModelConfig& cfg) {
  const int s = static_cast<int>(ex.text_ids.size());
  if (s < 2) throw std::invalid_argument("train: example text too short");
  if (ex.supervised_from < 0 || ex.supervised_from >= s - 1)
    throw std::invalid_argument("train: supervised_from out of range");
  if (static_cast<int>(ex.pose_targets.size()) != cfg.n_queries)
    throw std::invalid_argument("train: pose targets must fill every query slot");
  for (int t : ex.pose_targets)
    if (t < 0 || t >= cfg.n_pose_codes)
      throw std::out_of_range("train: pose target out of codebook range");
}

struct BatchLoss {
  double text = 0;
  double pose = 0;
  bool finite = true;
};

}  // namespace

TrainResult train(const std::vector<TrainExample>& dataset, const ModelParams& init,
                  const TrainConfig& config) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (!init.initialized) throw std::runtime_error("train: params not initialized");
  for (const auto& ex : dataset) check_example(ex, init.config);

  TrainResult result;
  result.params = init;
  if (config.lora.enabled)
    result.adapters = init_adapters(init.config, config.lora, config.seed + 1);

  rng::Engine eng(config.seed);
  ModelParams vel = zeros_like(result.params);
  LoraAdapterSet avel = zeros_like(result.adapters);

  ModelParams snapshot = result.params;
  LoraAdapterSet snapshot_adapters = result.adapters;

  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  const int batch = std::max(1, config.batch);
  const bool lora_on = config.lora.enabled;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), eng);
    double epoch_text = 0, epoch_pose = 0;
    int n_examples = 0;

    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const int bsz = static_cast<int>(end - start);
      ModelParams grads = zeros_like(result.params);
      LoraAdapterSet agrads = zeros_like(result.adapters);
      BatchLoss bl;

      for (std::size_t i = start; i < end; ++i) {
        const TrainExample& ex = dataset[order[i]];
        const int s = static_cast<int>(ex.text_ids.size());
        ForwardCache cache;
        const ForwardResult out =
            forward_train(ex.text_ids, result.params, lora_on ? &result.adapters : nullptr,
                          lora_on ? &eng : nullptr, cache);

        const int sup_rows = s - 1 - ex.supervised_from;
        const MatrixXd sup_logits = out.text_logits.middleRows(ex.supervised_from, sup_rows);
        std::vector<int> text_targets(ex.text_ids.begin() + ex.supervised_from + 1,
                                      ex.text_ids.end());
        MatrixXd d_sup, d_pose;
        const double lt = loss_text(sup_logits, text_targets, &d_sup);
        const double lpz = loss_pose(out.pose_logits, ex.pose_targets, &d_pose);
        if (!std::isfinite(lt) || !std::isfinite(lpz)) {
          bl.finite = false;
          break;
        }
        bl.text += lt;
        bl.pose += lpz;

        MatrixXd d_text = MatrixXd::Zero(s, result.params.config.vocab);
        d_text.middleRows(ex.supervised_from, sup_rows) = config.w_text * d_sup;
        d_pose *= config.w_pose;
        backward(cache, d_text, d_pose, result.params, lora_on ? &result.adapters : nullptr,
                 grads, lora_on ? &agrads : nullptr);
      }

      if (!bl.finite) {
        result.params = snapshot;
        result.adapters = snapshot_adapters;
        result.diverged = true;
        result.message = "training loss became non-finite at epoch " + std::to_string(epoch);
        return result;
      }
      epoch_text += bl.text;
      epoch_pose += bl.pose;
      n_examples += bsz;

      const double inv = 1.0 / static_cast<double>(bsz);
      auto sgd = [&](MatrixXd& param, MatrixXd& velocity, const MatrixXd& grad) {
        if (config.momentum > 0) {
          velocity = config.momentum * velocity + inv * grad;
          param -= config.lr * velocity;
        } else {
          param -= config.lr * inv * grad;
        }
      };

      if (lora_on) {
        // adapters + heads only; the base stays bitwise frozen
        for (std::size_t l = 0; l < result.adapters.layers.size(); ++l) {
          auto each = [&](LoraPair LayerAdapters::* m) {
            sgd(result.adapters.layers[l].*m.*(&LoraPair::a), avel.layers[l].*m.*(&LoraPair::a),
                agrads.layers[l].*m.*(&LoraPair::a));
            sgd(result.adapters.layers[l].*m.*(&LoraPair::b), avel.layers[l].*m.*(&LoraPair::b),
                agrads.layers[l].*m.*(&LoraPair::b));
          };
          each(&LayerAdapters::wq);
          each(&LayerAdapters::wk);
          each(&LayerAdapters::wv);
          each(&LayerAdapters::wo);
          each(&LayerAdapters::w_gate);
          each(&LayerAdapters::w_up);
          each(&LayerAdapters::w_down);
        }
        sgd(result.params.text_head, vel.text_head, grads.text_head);
        sgd(result.params.pose_head, vel.pose_head, grads.pose_head);
      } else {
        sgd(result.params.token_emb, vel.token_emb, grads.token_emb);
        sgd(result.params.text_pos, vel.text_pos, grads.text_pos);
        sgd(result.params.query_pos, vel.query_pos, grads.query_pos);
        for (std::size_t l = 0; l < result.params.layers.size(); ++l) {
          auto each = [&](MatrixXd LayerParams::* m) {
            sgd(result.params.layers[l].*m, vel.layers[l].*m, grads.layers[l].*m);
          };
          each(&LayerParams::ln1_g);
          each(&LayerParams::wq);
          each(&LayerParams::wk);
          each(&LayerParams::wv);
          each(&LayerParams::wo);
          each(&LayerParams::ln2_g);
          each(&LayerParams::w_gate);
          each(&LayerParams::w_up);
          each(&LayerParams::w_down);
        }
        sgd(result.params.ln_f_g, vel.ln_f_g, grads.ln_f_g);
        sgd(result.params.text_head, vel.text_head, grads.text_head);
        sgd(result.params.pose_head, vel.pose_head, grads.pose_head);
      }
    }

    result.log.push_back({epoch, epoch_text / n_examples, epoch_pose / n_examples});
    snapshot = result.params;
    snapshot_adapters = result.adapters;
  }
  return result;
}

void save_model(const ModelParams& params, const LoraAdapterSet* adapters,
                const std::string& path) {
  io::Checkpoint ckpt;
  ckpt.meta["kind"] = "pose-reasoner";
  ckpt.meta["layers"] = params.config.layers;
  ckpt.meta["heads"] = params.config.heads;
  ckpt.meta["width"] = params.config.width;
  ckpt.meta["mlp"] = params.config.mlp;
  ckpt.meta["vocab"] = params.config.vocab;
  ckpt.meta["n_pose_codes"] = params.config.n_pose_codes;
  ckpt.meta["n_queries"] = params.config.n_queries;
  ckpt.meta["context"] = params.config.context;
  ckpt.meta["rms_eps"] = params.config.rms_eps;
  const_cast<ModelParams&>(params).visit(
      [&](const char* name, MatrixXd& m) { ckpt.add(std::string("model.") + name, m); });
  if (adapters) {
    ckpt.meta["lora"] = {{"enabled", adapters->config.enabled},
                         {"rank", adapters->config.rank},
                         {"alpha", adapters->config.alpha},
                         {"dropout", adapters->config.dropout}};
    const_cast<LoraAdapterSet*>(adapters)->visit(
        [&](const char* name, MatrixXd& m) { ckpt.add(std::string("adapters.") + name, m); });
  }
  io::save_checkpoint(ckpt, path);
}

LoadedModel load_model(const std::string& path) {
  const io::Checkpoint ckpt = io::load_checkpoint(path);
  if (ckpt.meta.value("kind", "") != "pose-reasoner")
    throw std::runtime_error("not a reasoner checkpoint: " + path);
  LoadedModel out;
  ModelConfig cfg;
  cfg.layers = ckpt.meta.at("layers");
  cfg.heads = ckpt.meta.at("heads");
  cfg.width = ckpt.meta.at("width");
  cfg.mlp = ckpt.meta.at("mlp");
  cfg.vocab = ckpt.meta.at("vocab");
  cfg.n_pose_codes = ckpt.meta.at("n_pose_codes");
  cfg.n_queries = ckpt.meta.at("n_queries");
  cfg.context = ckpt.meta.at("context");
  cfg.rms_eps = ckpt.meta.at("rms_eps");
  out.params = init_model(cfg, 0);
  out.params.visit([&](const char* name, MatrixXd& m) {
    m = ckpt.get(std::string("model.") + name);
  });
  if (ckpt.meta.contains("lora")) {
    const auto& lj = ckpt.meta.at("lora");
    LoraConfig lc;
    lc.enabled = lj.at("enabled");
    lc.rank = lj.at("rank");
    lc.alpha = lj.at("alpha");
    lc.dropout = lj.at("dropout");
    out.adapters = init_adapters(cfg, lc, 0);
    out.adapters.visit([&](const char* name, MatrixXd& m) {
      m = ckpt.get(std::string("adapters.") + name);
    });
    out.has_adapters = true;
  }
  return out;
}

}  // namespace posegen::model
