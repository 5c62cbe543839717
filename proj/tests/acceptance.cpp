// Acceptance gate: nine go/no-go checks over the assembled system. Each
// prints one PASS/FAIL line with its runtime; failures list their reasons
// underneath. Exit status is the number of failed checks. An optional
// argv[1] runs a single check by number.
#include <Eigen/LU>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "posegen/generator.hpp"
#include "posegen/geometry.hpp"
#include "posegen/metrics.hpp"
#include "posegen/pose_tokenizer.hpp"
#include "posegen/reasoner.hpp"
#include "posegen/rng.hpp"
#include "posegen/synth.hpp"
#include "posegen/text_codec.hpp"

using namespace posegen;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;

namespace {

struct Checker {
  bool ok = true;
  std::string detail;  // appended to the PASS/FAIL line
  std::string notes;   // printed under a FAIL line

  void expect(bool cond, const std::string& what) {
    if (cond) return;
    ok = false;
    notes += "        " + what + "\n";
  }
};

// ---------------------------------------------------------------------------
// shared helpers

geometry::PoseParams random_pose(rng::Engine& eng, double scale) {
  geometry::PoseParams p;
  for (auto& r : p.rotations) {
    r = geometry::Vec3(scale * rng::normal(eng), scale * rng::normal(eng),
                       scale * rng::normal(eng));
  }
  return p;
}

int argmax_row(const RowVectorXd& row) {
  int best = 0;
  row.maxCoeff(&best);
  return best;
}

double pose_accuracy(const std::vector<model::TrainExample>& examples,
                     const model::ModelParams& params) {
  int correct = 0, total = 0;
  for (const auto& ex : examples) {
    const auto out = model::forward(ex.text_ids, params);
    for (int q = 0; q < out.pose_logits.rows(); ++q) {
      correct += argmax_row(out.pose_logits.row(q)) == ex.pose_targets[q] ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(correct) / total;
}

double text_accuracy(const std::vector<model::TrainExample>& examples,
                     const model::ModelParams& params) {
  int correct = 0, total = 0;
  for (const auto& ex : examples) {
    const auto out = model::forward(ex.text_ids, params);
    const int s = static_cast<int>(ex.text_ids.size());
    for (int t = ex.supervised_from; t < s - 1; ++t) {
      correct += argmax_row(out.text_logits.row(t)) == ex.text_ids[t + 1] ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(correct) / total;
}

/// Shared small end-to-end fixture: 16 procedural triplets, a tokenizer fit
/// to their poses, the joint vocabulary, and ready-made training examples.
struct E2eFixture {
  std::vector<synth::Triplet> triplets;
  vq::TokenizerParams tokenizer;
  text::SharedVocabulary vocab;
  std::vector<model::TrainExample> examples;
  model::ModelConfig arch;
};

const E2eFixture& e2e_fixture() {
  static const E2eFixture fx = [] {
    E2eFixture f;
    const auto taxonomy = synth::load_taxonomy(std::string(POSEGEN_DATA_DIR) + "/taxonomy.txt");
    const auto table =
        synth::load_family_table(std::string(POSEGEN_DATA_DIR) + "/pose_families.txt");
    synth::TaxonomyPromptSource prompts(taxonomy);
    synth::ProceduralImageSynthesizer image;
    synth::ProceduralPoseEstimator pose(table, 0.1);
    synth::RuleBasedCaptioner caption;
    synth::TemplateRefiner refine;
    const synth::StageClients clients{&prompts, &image, &pose, &caption, &refine};
    f.triplets = synth::synthesize_corpus(taxonomy, clients, 7, 16);

    std::vector<geometry::PoseParams> poses;
    for (const auto& t : f.triplets) poses.push_back(t.pose);
    vq::TokenizerTrainConfig tok_cfg;
    tok_cfg.arch = {64, 8, 16, 192, 0.25};
    tok_cfg.lr = 0.5;
    tok_cfg.epochs = 2000;
    tok_cfg.batch = 8;
    tok_cfg.seed = 11;
    tok_cfg.early_stop_recon = 5e-6;
    f.tokenizer = vq::train_tokenizer(poses, tok_cfg).params;

    std::vector<std::string> corpus;
    for (const auto& t : f.triplets) corpus.push_back(t.abstract_prompt);
    for (const auto& t : f.triplets) corpus.push_back(t.detailed_prompt);
    f.vocab = text::build_vocab(corpus, 64);

    for (const auto& t : f.triplets) {
      f.examples.push_back(gen::make_train_example(t.abstract_prompt, t.detailed_prompt,
                                                   t.pose, f.vocab, f.tokenizer));
    }

    f.arch.layers = 2;
    f.arch.heads = 2;
    f.arch.width = 64;
    f.arch.context = 256;
    f.arch.vocab = f.vocab.size();
    f.arch.n_pose_codes = 64;
    f.arch.n_queries = 16;
    return f;
  }();
  return fx;
}

// ---------------------------------------------------------------------------
// 1. geometry invariants

void crit_geometry(Checker& c) {
  rng::Engine eng(101);
  const auto& skel = geometry::default_skeleton();
  double worst_orth = 0, worst_det = 0, worst_link = 0, worst_equi = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto pose = random_pose(eng, 0.9);
    for (const auto& r : pose.rotations) {
      const auto m = geometry::axis_angle_to_matrix(r);
      worst_orth = std::max(worst_orth,
                            (m.transpose() * m - geometry::Mat3::Identity()).cwiseAbs().maxCoeff());
      worst_det = std::max(worst_det, std::abs(m.determinant() - 1.0));
    }

    const auto joints = geometry::forward_kinematics(pose, skel);
    for (int j = 1; j < skel.joint_count(); ++j) {
      const double len = (joints.positions[j] - joints.positions[skel.parent[j]]).norm();
      worst_link = std::max(worst_link, std::abs(len - skel.rest_offsets[j].norm()));
    }

    const geometry::Vec3 extra(rng::normal(eng), rng::normal(eng), rng::normal(eng));
    const auto rot = geometry::axis_angle_to_matrix(extra);
    auto rooted = pose;
    rooted.rotations[0] = geometry::matrix_to_axis_angle(
        rot * geometry::axis_angle_to_matrix(pose.rotations[0]));
    const auto rotated = geometry::forward_kinematics(rooted, skel);
    for (int j = 0; j < skel.joint_count(); ++j) {
      worst_equi = std::max(worst_equi,
                            (rotated.positions[j] - rot * joints.positions[j]).norm());
    }
  }
  c.expect(worst_orth < 1e-9, "orthogonality residual " + std::to_string(worst_orth));
  c.expect(worst_det < 1e-9, "determinant residual " + std::to_string(worst_det));
  c.expect(worst_link < 1e-9, "rigid link residual " + std::to_string(worst_link));
  c.expect(worst_equi < 1e-9, "root equivariance residual " + std::to_string(worst_equi));
  char buf[128];
  std::snprintf(buf, sizeof(buf), "worst residual %.2e over 1000 poses",
                std::max({worst_orth, worst_det, worst_link, worst_equi}));
  c.detail = buf;
}

// ---------------------------------------------------------------------------
// 2. gradient checks

// The straight-through estimator differentiates the objective with the
// assignments, quantization residual, and stop-gradient copies frozen at the
// base point; finite differences must probe that same smooth surrogate.
double vq_surrogate(vq::TokenizerParams& p, const RowVectorXd& x, const std::vector<int>& assign,
                    const MatrixXd& residual, const MatrixXd& frozen_latents,
                    const MatrixXd& frozen_entries) {
  const RowVectorXd h = (x * p.enc_w1 + p.enc_b1.row(0)).array().tanh();
  const RowVectorXd z = h * p.enc_w2 + p.enc_b2.row(0);
  MatrixXd ze(p.config.n_tokens, p.config.latent_dim);
  for (int l = 0; l < p.config.n_tokens; ++l)
    ze.row(l) = z.segment(l * p.config.latent_dim, p.config.latent_dim);

  const MatrixXd zq = ze + residual;
  RowVectorXd flat(zq.size());
  for (int l = 0; l < zq.rows(); ++l) flat.segment(l * zq.cols(), zq.cols()) = zq.row(l);
  const RowVectorXd dh = (flat * p.dec_w1 + p.dec_b1.row(0)).array().tanh();
  const RowVectorXd y = dh * p.dec_w2 + p.dec_b2.row(0);

  const double n_latent = static_cast<double>(ze.size());
  double loss = (y - x).squaredNorm() / static_cast<double>(x.size());
  for (std::size_t l = 0; l < assign.size(); ++l) {
    loss += (p.codebook.entries.row(assign[l]) - frozen_latents.row(static_cast<int>(l)))
                .squaredNorm() /
            n_latent;
  }
  loss += p.config.beta * (ze - frozen_entries).squaredNorm() / n_latent;
  return loss;
}

double model_objective(const std::vector<int>& ids, int sup_from,
                       const vq::PoseTokenSequence& pose_targets,
                       const model::ModelParams& params) {
  const auto out = model::forward(ids, params);
  const int s = static_cast<int>(ids.size());
  const MatrixXd sup = out.text_logits.middleRows(sup_from, s - 1 - sup_from);
  const std::vector<int> targets(ids.begin() + sup_from + 1, ids.end());
  return model::loss_text(sup, targets) + model::loss_pose(out.pose_logits, pose_targets);
}

void crit_gradients(Checker& c) {
  const double h = 1e-5;
  double worst = 0;
  long n_params = 0;

  {  // quantizing autoencoder
    vq::TokenizerConfig cfg;
    cfg.codebook_size = 4;
    cfg.latent_dim = 2;
    cfg.n_tokens = 3;
    cfg.hidden = 5;
    auto params = vq::init_tokenizer(cfg, 23);
    rng::Engine eng(77);
    const auto pose = random_pose(eng, 0.6);
    const RowVectorXd x = pose.to_flat().transpose();

    const auto cache = vq::vq_forward(pose, params);
    auto grads = vq::zeros_like(params);
    vq::vq_backward(cache, params, grads);
    const std::vector<int> assign = cache.indices;
    const MatrixXd residual = cache.quantized - cache.latents;
    const MatrixXd frozen_latents = cache.latents;
    const MatrixXd frozen_entries = cache.quantized;

    params.visit([&](const char* name, MatrixXd& tensor) {
      MatrixXd* g = nullptr;
      grads.visit([&](const char* gname, MatrixXd& gm) {
        if (std::string(gname) == name) g = &gm;
      });
      for (int r = 0; r < tensor.rows(); ++r) {
        for (int col = 0; col < tensor.cols(); ++col) {
          const double saved = tensor(r, col);
          tensor(r, col) = saved + h;
          const double up = vq_surrogate(params, x, assign, residual, frozen_latents, frozen_entries);
          tensor(r, col) = saved - h;
          const double down =
              vq_surrogate(params, x, assign, residual, frozen_latents, frozen_entries);
          tensor(r, col) = saved;
          const double fd = (up - down) / (2 * h);
          const double denom = std::max({std::abs(fd), std::abs((*g)(r, col)), 1e-7});
          worst = std::max(worst, std::abs(fd - (*g)(r, col)) / denom);
          ++n_params;
        }
      }
    });
    c.expect(n_params <= 10000, "tokenizer probe exceeds the small-model bound");
  }

  {  // transformer objective
    model::ModelConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.width = 8;
    cfg.mlp = 12;
    cfg.vocab = 19;
    cfg.n_pose_codes = 6;
    cfg.n_queries = 80;
    cfg.context = 96;
    auto params = model::init_model(cfg, 29);
    const std::vector<int> ids = {1, 7, 8, 9, 10, 3};
    const int sup_from = 2;
    vq::PoseTokenSequence pose_targets(cfg.n_queries);
    for (int q = 0; q < cfg.n_queries; ++q) pose_targets[q] = (q * 5) % cfg.n_pose_codes;

    model::ForwardCache cache;
    const auto out = model::forward_train(ids, params, nullptr, nullptr, cache);
    const int s = static_cast<int>(ids.size());
    const MatrixXd sup = out.text_logits.middleRows(sup_from, s - 1 - sup_from);
    const std::vector<int> text_targets(ids.begin() + sup_from + 1, ids.end());
    MatrixXd d_sup, d_pose;
    model::loss_text(sup, text_targets, &d_sup);
    model::loss_pose(out.pose_logits, pose_targets, &d_pose);
    MatrixXd d_text = MatrixXd::Zero(s, cfg.vocab);
    d_text.middleRows(sup_from, s - 1 - sup_from) = d_sup;
    auto grads = model::zeros_like(params);
    model::backward(cache, d_text, d_pose, params, nullptr, grads, nullptr);

    long model_params = 0;
    params.visit([&](const char* name, MatrixXd& tensor) {
      MatrixXd* g = nullptr;
      grads.visit([&](const char* gname, MatrixXd& gm) {
        if (std::string(gname) == name) g = &gm;
      });
      for (int r = 0; r < tensor.rows(); ++r) {
        for (int col = 0; col < tensor.cols(); ++col) {
          const double saved = tensor(r, col);
          tensor(r, col) = saved + h;
          const double up = model_objective(ids, sup_from, pose_targets, params);
          tensor(r, col) = saved - h;
          const double down = model_objective(ids, sup_from, pose_targets, params);
          tensor(r, col) = saved;
          const double fd = (up - down) / (2 * h);
          const double denom = std::max({std::abs(fd), std::abs((*g)(r, col)), 1e-7});
          worst = std::max(worst, std::abs(fd - (*g)(r, col)) / denom);
          ++model_params;
        }
      }
    });
    c.expect(model_params <= 10000, "transformer probe exceeds the small-model bound");
    n_params += model_params;
  }

  c.expect(worst < 1e-4, "worst relative gradient error " + std::to_string(worst));
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%ld parameters, worst relative error %.2e", n_params, worst);
  c.detail = buf;
}

// ---------------------------------------------------------------------------
// 3. attention mask and causality

void crit_mask(Checker& c) {
  bool mask_ok = true;
  for (int s = 1; s <= 16; ++s) {
    for (int nq : {0, 1, 80}) {
      const auto mask = model::build_mask(s, nq);
      if (mask.rows() != s + nq || mask.cols() != s + nq) mask_ok = false;
      for (int i = 0; i < s + nq && mask_ok; ++i) {
        for (int j = 0; j < s + nq; ++j) {
          const bool expb = i < s ? (j <= i) : true;
          if (mask(i, j) != expb) {
            mask_ok = false;
            break;
          }
        }
      }
    }
  }
  c.expect(mask_ok, "mask mismatch against the closed-form definition");

  model::ModelConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.width = 8;
  cfg.mlp = 12;
  cfg.vocab = 19;
  cfg.n_pose_codes = 6;
  cfg.n_queries = 8;
  cfg.context = 32;
  const auto params = model::init_model(cfg, 5);
  const std::vector<int> ids = {1, 7, 8, 9, 10, 3};
  const auto base = model::forward(ids, params);

  // Changing a later text token must not move any earlier text row.
  double causal_resid = 0;
  for (std::size_t t = 1; t < ids.size(); ++t) {
    auto perturbed = ids;
    perturbed[t] = perturbed[t] == 7 ? 8 : 7;
    const auto out = model::forward(perturbed, params);
    for (std::size_t row = 0; row < t; ++row) {
      causal_resid = std::max(causal_resid, (out.text_logits.row(static_cast<int>(row)) -
                                             base.text_logits.row(static_cast<int>(row)))
                                                .cwiseAbs()
                                                .maxCoeff());
    }
  }
  c.expect(causal_resid <= 1e-12,
           "later text leaked into earlier rows: " + std::to_string(causal_resid));

  // Randomizing everything only the query slots consume must not move text.
  auto blinded = params;
  rng::Engine eng(3);
  for (int r = 0; r < blinded.query_pos.rows(); ++r)
    for (int col = 0; col < blinded.query_pos.cols(); ++col)
      blinded.query_pos(r, col) = rng::normal(eng);
  for (int r = 0; r < blinded.pose_head.rows(); ++r)
    for (int col = 0; col < blinded.pose_head.cols(); ++col)
      blinded.pose_head(r, col) = rng::normal(eng);
  const auto out = model::forward(ids, blinded);
  const double query_resid = (out.text_logits - base.text_logits).cwiseAbs().maxCoeff();
  c.expect(query_resid <= 1e-12,
           "query slots leaked into text rows: " + std::to_string(query_resid));

  char buf[128];
  std::snprintf(buf, sizeof(buf), "48 mask shapes exact, leak residuals %.1e / %.1e",
                causal_resid, query_resid);
  c.detail = buf;
}

// ---------------------------------------------------------------------------
// 4. tokenizer overfit

void crit_tokenizer_overfit(Checker& c) {
  rng::Engine eng(21);
  const auto& families = synth::family_names();
  std::vector<geometry::PoseParams> corpus;
  for (int i = 0; i < 32; ++i) {
    corpus.push_back(synth::sample_family_pose(families[i % families.size()], 0.1, eng));
  }

  vq::TokenizerTrainConfig cfg;
  cfg.arch = {64, 8, 16, 192, 0.25};
  cfg.lr = 0.5;
  cfg.epochs = 2000;
  cfg.batch = 8;
  cfg.seed = 11;
  const auto result = vq::train_tokenizer(corpus, cfg);
  c.expect(!result.diverged, "tokenizer training diverged: " + result.message);

  double mpjpe_sum = 0;
  int idempotent = 0;
  for (const auto& pose : corpus) {
    const auto tokens = vq::encode(pose, result.params);
    const auto rec = vq::decode(tokens, result.params);
    mpjpe_sum += metrics::mpjpe_mm(rec, pose);
    idempotent += vq::encode(rec, result.params) == tokens ? 1 : 0;
  }
  const double mean_mm = mpjpe_sum / 32.0;
  c.expect(mean_mm < 10.0, "round-trip error " + std::to_string(mean_mm) + " mm >= 10 mm");
  c.expect(idempotent >= 30, "only " + std::to_string(idempotent) + "/32 poses idempotent");
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.2f mm round trip, %d/32 idempotent", mean_mm, idempotent);
  c.detail = buf;
}

// ---------------------------------------------------------------------------
// 5. end-to-end overfit

void crit_e2e(Checker& c) {
  const auto& fx = e2e_fixture();

  model::TrainConfig tc;
  tc.lr = 0.3;
  tc.momentum = 0.0;
  tc.batch = 4;
  tc.epochs = 600;
  tc.seed = 2;
  const auto trained = model::train(fx.examples, model::init_model(fx.arch, 43), tc);
  c.expect(!trained.diverged, "training diverged: " + trained.message);

  int exact_texts = 0, token_hits = 0, token_total = 0;
  std::vector<geometry::PoseParams> gt_poses, gen_poses;
  std::vector<std::string> gt_texts, gen_texts;
  for (const auto& t : fx.triplets) {
    const auto r = gen::generate(t.abstract_prompt, fx.vocab, trained.params, nullptr,
                                 fx.tokenizer, {});
    exact_texts += r.detailed_prompt == text::normalize(t.detailed_prompt) ? 1 : 0;
    const auto want = vq::encode(t.pose, fx.tokenizer);
    for (std::size_t k = 0; k < want.size(); ++k) {
      token_hits += r.pose_tokens[k] == want[k] ? 1 : 0;
      ++token_total;
    }
    gt_poses.push_back(t.pose);
    gen_poses.push_back(r.pose);
    gt_texts.push_back(t.detailed_prompt);
    gen_texts.push_back(r.detailed_prompt);
  }
  const double token_acc = static_cast<double>(token_hits) / token_total;
  c.expect(exact_texts == 16,
           "only " + std::to_string(exact_texts) + "/16 reasoning texts reproduced exactly");
  c.expect(token_acc >= 0.95, "pose token accuracy " + std::to_string(token_acc) + " < 0.95");

  const auto report = metrics::evaluate(gt_poses, gen_poses, gt_texts, gen_texts, fx.vocab);
  c.expect(report.mpjpe_mm < 10.0,
           "joint error " + std::to_string(report.mpjpe_mm) + " mm >= 10 mm");
  char buf[160];
  std::snprintf(buf, sizeof(buf), "16/16 texts, %.1f%% tokens, %.2f mm joint error",
                100.0 * token_acc, report.mpjpe_mm);
  c.detail = buf;
}

// ---------------------------------------------------------------------------
// 6. ablation behavior

void crit_ablations(Checker& c) {
  const auto& fx = e2e_fixture();
  const double chance = 1.0 / fx.arch.n_pose_codes;

  model::TrainConfig tc;
  tc.lr = 0.3;
  tc.momentum = 0.0;
  tc.batch = 4;
  tc.epochs = 400;
  tc.seed = 2;

  tc.w_text = 1.0;
  tc.w_pose = 0.0;
  const auto text_only = model::train(fx.examples, model::init_model(fx.arch, 43), tc);
  const double to_text_loss = text_only.log.back().text_loss;
  const double to_pose_acc = pose_accuracy(fx.examples, text_only.params);
  c.expect(to_text_loss < 0.1,
           "text-only mode left text loss at " + std::to_string(to_text_loss));
  c.expect(to_pose_acc <= 2.0 * chance,
           "text-only mode moved pose accuracy to " + std::to_string(to_pose_acc));

  tc.w_text = 0.0;
  tc.w_pose = 1.0;
  const auto pose_only = model::train(fx.examples, model::init_model(fx.arch, 43), tc);
  const double po_pose_acc = pose_accuracy(fx.examples, pose_only.params);
  const double po_text_acc = text_accuracy(fx.examples, pose_only.params);
  c.expect(po_pose_acc >= 0.95,
           "pose-only mode reached pose accuracy " + std::to_string(po_pose_acc));
  c.expect(po_text_acc < 0.9,
           "pose-only mode unexpectedly fit the text: " + std::to_string(po_text_acc));

  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "text-only: loss %.3g, pose acc %.3f; pose-only: acc %.3f, text acc %.3f",
                to_text_loss, to_pose_acc, po_pose_acc, po_text_acc);
  c.detail = buf;
}

// ---------------------------------------------------------------------------
// 7. adapter contract

void crit_lora(Checker& c) {
  const auto& fx = e2e_fixture();
  const auto base = model::init_model(fx.arch, 43);

  model::LoraConfig lc;
  lc.enabled = true;
  lc.rank = 4;
  lc.alpha = 8.0;
  lc.dropout = 0.0;
  const auto fresh = model::init_adapters(fx.arch, lc, 9);

  const auto& probe = fx.examples.front().text_ids;
  const auto without = model::forward(probe, base);
  const auto with = model::forward(probe, base, &fresh);
  c.expect((with.text_logits.array() == without.text_logits.array()).all() &&
               (with.pose_logits.array() == without.pose_logits.array()).all(),
           "zero-initialized adapters changed the base outputs");

  model::TrainConfig tc;
  tc.lr = 0.1;
  tc.momentum = 0.0;
  tc.batch = 4;
  tc.epochs = 30;
  tc.seed = 3;
  tc.lora = lc;
  tc.lora.dropout = 0.05;
  auto trained = model::train(fx.examples, base, tc);
  c.expect(!trained.diverged, "adapter training diverged: " + trained.message);

  int frozen = 0, moved_heads = 0;
  auto mutable_base = base;
  trained.params.visit([&](const char* name, MatrixXd& m) {
    MatrixXd* b = nullptr;
    mutable_base.visit([&](const char* bname, MatrixXd& bm) {
      if (std::string(bname) == name) b = &bm;
    });
    const std::string n(name);
    if (n == "text_head" || n == "pose_head") {
      moved_heads += (m.array() == b->array()).all() ? 0 : 1;
    } else if ((m.array() == b->array()).all()) {
      ++frozen;
    } else {
      c.expect(false, n + " moved during adapter training");
    }
  });
  c.expect(frozen > 0, "no base arrays compared");

  double b_norm = 0;
  trained.adapters.visit([&](const char* name, MatrixXd& m) {
    if (std::string(name).ends_with(".b")) b_norm += m.norm();
  });
  c.expect(b_norm > 0, "adapters did not move at all");
  c.expect(trained.log.back().text_loss < trained.log.front().text_loss,
           "no learning progress through the adapter path");

  model::LoraConfig published;
  published.rank = 64;
  published.alpha = 16.0;
  c.expect(published.scale() == 0.25, "adapter scale is not alpha / rank");

  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d base arrays bitwise frozen, %d heads updated, scale 0.25",
                frozen, moved_heads);
  c.detail = buf;
}

// ---------------------------------------------------------------------------
// 8. pipeline determinism

std::string corpus_bytes(const std::vector<synth::Triplet>& corpus, const std::string& name) {
  const auto path = (std::filesystem::temp_directory_path() / name).string();
  synth::save_triplets(corpus, path);
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::filesystem::remove(path);
  return ss.str();
}

void crit_determinism(Checker& c) {
  const auto taxonomy = synth::load_taxonomy(std::string(POSEGEN_DATA_DIR) + "/taxonomy.txt");
  const auto table =
      synth::load_family_table(std::string(POSEGEN_DATA_DIR) + "/pose_families.txt");
  synth::TaxonomyPromptSource prompts(taxonomy);
  synth::ProceduralImageSynthesizer image;
  synth::ProceduralPoseEstimator pose(table, 0.1);
  synth::RuleBasedCaptioner caption;
  synth::TemplateRefiner refine;
  const synth::StageClients clients{&prompts, &image, &pose, &caption, &refine};

  const auto run_a = synth::synthesize_corpus(taxonomy, clients, 7);
  const auto run_b = synth::synthesize_corpus(taxonomy, clients, 7);
  c.expect(run_a.size() == 550, "corpus holds " + std::to_string(run_a.size()) + " triplets");
  c.expect(corpus_bytes(run_a, "posegen_accept_a.jsonl") ==
               corpus_bytes(run_b, "posegen_accept_b.jsonl"),
           "two runs with one seed produced different bytes");

  int contradictions = 0;
  for (const auto& t : run_a) {
    contradictions += synth::count_contradictions(t.detailed_prompt, t.pose);
  }
  c.expect(contradictions == 0,
           std::to_string(contradictions) + " caption facts contradict their poses");
  char buf[128];
  std::snprintf(buf, sizeof(buf), "550 triplets byte-identical across runs, %d contradictions",
                contradictions);
  c.detail = buf;
}

// ---------------------------------------------------------------------------
// 9. metric conventions

void crit_metrics(Checker& c) {
  c.expect(metrics::kMpjpeScale == 1000.0 && metrics::kPfdScale == 1000.0 &&
               metrics::kTfdScale == 10.0 && metrics::kMfdScale == 10.0,
           "scale constants drifted");

  rng::Engine eng(55);
  const auto& families = synth::family_names();
  std::vector<geometry::PoseParams> a, b;
  std::vector<std::string> ta, tb;
  for (int i = 0; i < 6; ++i) {
    a.push_back(synth::sample_family_pose(families[i], 0.1, eng));
    b.push_back(synth::sample_family_pose(families[i + 6], 0.1, eng));
    ta.push_back(synth::caption_pose(a.back()));
    tb.push_back(synth::caption_pose(b.back()));
  }
  std::vector<std::string> vocab_corpus = ta;
  vocab_corpus.insert(vocab_corpus.end(), tb.begin(), tb.end());
  const auto vocab = text::build_vocab(vocab_corpus, 0);

  double raw_pose = 0, raw_text = 0;
  for (int i = 0; i < 6; ++i) {
    raw_pose += metrics::feature_distance(metrics::pose_feature(a[i]), metrics::pose_feature(b[i]));
    raw_text += metrics::feature_distance(metrics::text_feature(ta[i], vocab),
                                          metrics::text_feature(tb[i], vocab));
  }
  const double pfd_resid = std::abs(metrics::pfd(a, b) - 1000.0 * raw_pose / 6.0);
  const double tfd_resid = std::abs(metrics::tfd(ta, tb, vocab) - 10.0 * raw_text / 6.0);
  const double mfd_resid = std::abs(metrics::mfd(ta, b, vocab) - 10.0 * raw_text / 6.0);
  c.expect(pfd_resid < 1e-9, "pose distance ignores the x1000 convention");
  c.expect(tfd_resid < 1e-9, "text distance ignores the x10 convention");
  c.expect(mfd_resid < 1e-9, "cross-modal distance ignores the x10 convention");

  c.expect(metrics::pfd(a, a) == 0.0 && metrics::tfd(ta, ta, vocab) == 0.0 &&
               metrics::mfd(ta, a, vocab) == 0.0 && metrics::mpjpe_mm(a[0], a[0]) == 0.0,
           "a metric is nonzero on identical inputs");

  const auto gt = a[0];
  auto pred = b[0];
  const double base_mm = metrics::mpjpe_mm(pred, gt);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    pred.rotations[0] =
        geometry::Vec3(rng::normal(eng), rng::normal(eng), rng::normal(eng));
    worst = std::max(worst, std::abs(metrics::mpjpe_mm(pred, gt) - base_mm));
  }
  c.expect(worst < 1e-9, "root alignment leaked " + std::to_string(worst) + " mm");
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "scales exact, zero self-distance, alignment residual %.1e mm over 1000 roots",
                worst);
  c.detail = buf;
}

// ---------------------------------------------------------------------------

struct Criterion {
  const char* title;
  std::function<void(Checker&)> run;
  double budget_s;  // 0 disables the runtime bound
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {"rotation, rigid-link, and root-equivariance invariants", crit_geometry, 5.0},
      {"analytic gradients match central finite differences", crit_gradients, 120.0},
      {"attention mask closed form and causality", crit_mask, 0.0},
      {"tokenizer overfit: round trip under 10 mm", crit_tokenizer_overfit, 300.0},
      {"end-to-end overfit: exact reasoning text and matching pose", crit_e2e, 600.0},
      {"ablations steer the two loss channels independently", crit_ablations, 0.0},
      {"adapter contract: identity at init, frozen base, exact scale", crit_lora, 0.0},
      {"dataset synthesis deterministic, complete, contradiction-free", crit_determinism, 0.0},
      {"metric scaling, self-distance, and root alignment", crit_metrics, 0.0},
  };

  int only = 0;
  if (argc > 1) only = std::atoi(argv[1]);

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only > 0 && static_cast<int>(i + 1) != only) continue;
    Checker checker;
    const auto start = std::chrono::steady_clock::now();
    try {
      criteria[i].run(checker);
    } catch (const std::exception& e) {
      checker.ok = false;
      checker.notes += std::string("        exception: ") + e.what() + "\n";
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (criteria[i].budget_s > 0 && seconds > criteria[i].budget_s) {
      checker.ok = false;
      checker.notes += "        runtime " + std::to_string(seconds) + " s over budget\n";
    }

    std::printf("[%zu/9] %s  %s (%.1f s%s%s%s)\n", i + 1, checker.ok ? "PASS" : "FAIL",
                criteria[i].title, seconds,
                criteria[i].budget_s > 0 ? ", budget " : "",
                criteria[i].budget_s > 0
                    ? (std::to_string(static_cast<int>(criteria[i].budget_s)) + " s").c_str()
                    : "",
                checker.detail.empty() ? "" : ("; " + checker.detail).c_str());
    if (!checker.ok) {
      std::fputs(checker.notes.c_str(), stdout);
      ++failed;
    }
    std::fflush(stdout);
  }
  if (only == 0) {
    std::printf("%d/9 criteria passed\n", 9 - failed);
  }
  return failed;
}
