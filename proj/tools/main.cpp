// posegen: dataset synthesis, training, generation, evaluation, export.
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid taxonomy,
// 3 missing upstream artifact, 4 training diverged (NaN loss).
#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "posegen/generator.hpp"
#include "posegen/geometry.hpp"
#include "posegen/metrics.hpp"
#include "posegen/pose_tokenizer.hpp"
#include "posegen/reasoner.hpp"
#include "posegen/synth.hpp"
#include "posegen/text_codec.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace posegen;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitBadTaxonomy = 2;
constexpr int kExitMissingArtifact = 3;
constexpr int kExitDiverged = 4;

/// Binds options so a JSON config file can fill any value not given on the
/// command line (flags win). Config keys are the long option names.
struct Overlay {
  std::vector<std::pair<CLI::Option*, std::function<void(const json&)>>> items;

  template <class T>
  CLI::Option* bind(CLI::App& cmd, const std::string& flag, T& value, const std::string& help) {
    auto* opt = cmd.add_option(flag, value, help);
    items.emplace_back(opt, [&value](const json& j) { value = j.get<T>(); });
    return opt;
  }

  CLI::Option* bind_flag(CLI::App& cmd, const std::string& flag, bool& value,
                         const std::string& help) {
    auto* opt = cmd.add_flag(flag, value, help);
    items.emplace_back(opt, [&value](const json& j) { value = j.get<bool>(); });
    return opt;
  }

  void apply(const std::string& config_path) {
    if (config_path.empty()) return;
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open config file: " + config_path);
    const json cfg = json::parse(in);
    for (auto& [opt, assign] : items) {
      const auto& names = opt->get_lnames();
      if (names.empty() || opt->count() > 0) continue;
      if (cfg.contains(names[0])) assign(cfg.at(names[0]));
    }
  }
};

int require_file(const std::string& path, const char* what) {
  if (fs::exists(path)) return 0;
  std::fprintf(stderr, "error: missing %s: %s\n", what, path.c_str());
  return kExitMissingArtifact;
}

void ensure_out_dir(const std::string& out) {
  if (!out.empty()) fs::create_directories(out);
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::vector<synth::Triplet> load_kept(const std::string& dataset_path) {
  std::vector<synth::Triplet> kept;
  for (auto& t : synth::load_triplets(dataset_path)) {
    if (!t.filtered) kept.push_back(std::move(t));
  }
  return kept;
}

// ---------------------------------------------------------------------------
// Geometry exports

void write_obj(const geometry::PoseParams& pose, const geometry::Skeleton& skel,
               const std::string& path) {
  const auto joints = geometry::forward_kinematics(pose, skel);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# 24 joints with bone edges\n";
  char line[128];
  for (const auto& p : joints.positions) {
    std::snprintf(line, sizeof(line), "v %.9f %.9f %.9f\n", p.x(), p.y(), p.z());
    out << line;
  }
  for (int j = 1; j < skel.joint_count(); ++j) {
    out << "l " << skel.parent[j] + 1 << " " << j + 1 << "\n";
  }
}

/// Stick figure, orthographic projection onto the x-y plane, y up.
void write_svg(const geometry::PoseParams& pose, const geometry::Skeleton& skel,
               const std::string& path) {
  const auto joints = geometry::forward_kinematics(pose, skel);
  double min_x = 1e9, max_x = -1e9, min_y = 1e9, max_y = -1e9;
  for (const auto& p : joints.positions) {
    min_x = std::min(min_x, p.x());
    max_x = std::max(max_x, p.x());
    min_y = std::min(min_y, p.y());
    max_y = std::max(max_y, p.y());
  }
  const double pad = 0.1;
  const double span = std::max(max_x - min_x, max_y - min_y) + 2 * pad;
  const double scale = 400.0 / span;
  const auto sx = [&](double x) { return (x - min_x + pad) * scale; };
  const auto sy = [&](double y) { return (max_y - y + pad) * scale; };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"400\">\n";
  char line[256];
  for (int j = 1; j < skel.joint_count(); ++j) {
    const auto& a = joints.positions[skel.parent[j]];
    const auto& b = joints.positions[j];
    std::snprintf(line, sizeof(line),
                  "  <line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                  "stroke=\"black\" stroke-width=\"2\"/>\n",
                  sx(a.x()), sy(a.y()), sx(b.x()), sy(b.y()));
    out << line;
  }
  for (const auto& p : joints.positions) {
    std::snprintf(line, sizeof(line), "  <circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\"/>\n",
                  sx(p.x()), sy(p.y()));
    out << line;
  }
  out << "</svg>\n";
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string config, out = "out";
  std::string taxonomy = "data/taxonomy.txt";
  std::string families = "data/pose_families.txt";
  std::uint64_t seed = 7;
  int limit = -1;
  double sigma = 0.1;
};

int run_synth(const SynthArgs& a) {
  synth::ActionTaxonomy taxonomy;
  synth::PoseFamilyTable table;
  try {
    taxonomy = synth::load_taxonomy(a.taxonomy);
    table = synth::load_family_table(a.families);
    for (const auto& [category, label] : taxonomy.flat()) table.family_of(label);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: invalid taxonomy: %s\n", e.what());
    return kExitBadTaxonomy;
  }

  synth::TaxonomyPromptSource prompts(taxonomy);
  synth::ProceduralImageSynthesizer image;
  synth::ProceduralPoseEstimator pose(table, a.sigma);
  synth::RuleBasedCaptioner caption;
  synth::TemplateRefiner refine;
  const synth::StageClients clients{&prompts, &image, &pose, &caption, &refine};

  const auto corpus = synth::synthesize_corpus(taxonomy, clients, a.seed, a.limit);
  const auto outcome = synth::filter_triplets(corpus, synth::default_filter_rules());

  // Persist in synthesis order, with filter verdicts merged back by id.
  std::map<std::string, const synth::Triplet*> verdict;
  for (const auto& t : outcome.kept) verdict[t.id] = &t;
  for (const auto& t : outcome.rejected) verdict[t.id] = &t;
  std::vector<synth::Triplet> ordered;
  for (const auto& t : corpus) ordered.push_back(*verdict.at(t.id));

  ensure_out_dir(a.out);
  synth::save_triplets(ordered, join_path(a.out, "dataset.jsonl"));
  synth::write_review_csv(ordered, join_path(a.out, "review.csv"));

  std::map<std::string, int> per_category;
  std::map<std::string, int> reasons;
  for (const auto& t : ordered) {
    ++per_category[t.category];
    if (t.filtered) ++reasons[t.reason];
  }
  std::printf("synthesized %zu triplets (seed %llu)\n", ordered.size(),
              static_cast<unsigned long long>(a.seed));
  for (const auto& [category, n] : per_category) {
    std::printf("  %-32s %d\n", category.c_str(), n);
  }
  std::printf("kept %zu, filtered %zu\n", outcome.kept.size(), outcome.rejected.size());
  for (const auto& [reason, n] : reasons) {
    std::printf("  %-32s %d\n", reason.c_str(), n);
  }
  std::printf("wrote %s and %s\n", join_path(a.out, "dataset.jsonl").c_str(),
              join_path(a.out, "review.csv").c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train-tokenizer

struct TrainTokArgs {
  std::string config, out = "out";
  std::string dataset = "out/dataset.jsonl";
  std::uint64_t seed = 0;
  int codebook = 256, latent = 32, tokens = 80, hidden = 128;
  double lr = 1e-3, beta = 0.25, early_stop = 0.0;
  int epochs = 200, batch = 8;
};

int run_train_tokenizer(const TrainTokArgs& a) {
  if (int rc = require_file(a.dataset, "dataset")) return rc;
  std::vector<geometry::PoseParams> poses;
  for (const auto& t : load_kept(a.dataset)) poses.push_back(t.pose);
  if (poses.empty()) {
    std::fprintf(stderr, "error: dataset has no kept triplets\n");
    return kExitFailure;
  }

  vq::TokenizerTrainConfig cfg;
  cfg.arch = {a.codebook, a.latent, a.tokens, a.hidden, a.beta};
  cfg.lr = a.lr;
  cfg.epochs = a.epochs;
  cfg.batch = a.batch;
  cfg.seed = a.seed;
  cfg.early_stop_recon = a.early_stop;

  const auto result = vq::train_tokenizer(poses, cfg);

  ensure_out_dir(a.out);
  const std::string ckpt = join_path(a.out, "tokenizer.ckpt");
  vq::save_tokenizer(result.params, ckpt);
  {
    std::ofstream csv(join_path(a.out, "tokenizer_loss.csv"));
    csv << "epoch,reconstruction,codebook,commitment,total\n";
    char line[160];
    for (const auto& e : result.log) {
      std::snprintf(line, sizeof(line), "%d,%.10g,%.10g,%.10g,%.10g\n", e.epoch, e.recon_mse,
                    e.codebook, e.commitment, e.recon_mse + e.codebook + e.commitment);
      csv << line;
    }
  }
  if (result.diverged) {
    std::fprintf(stderr, "error: training diverged (%s); last checkpoint at %s\n",
                 result.message.c_str(), ckpt.c_str());
    return kExitDiverged;
  }
  std::printf("trained tokenizer on %zu poses; final reconstruction mse %.6g\n", poses.size(),
              result.log.empty() ? 0.0 : result.log.back().recon_mse);
  std::printf("wrote %s\n", ckpt.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// train-model

struct TrainModelArgs {
  std::string config, out = "out";
  std::string dataset = "out/dataset.jsonl";
  std::string tokenizer = "out/tokenizer.ckpt";
  std::string base;  // checkpoint to continue from (required for --lora)
  std::string ablation = "full";
  std::uint64_t seed = 0;
  int layers = 2, heads = 2, width = 64, mlp = 0, context = 256;
  double lr = 0.3, momentum = 0.0;
  int epochs = 200, batch = 4;
  bool lora = false;
  int lora_rank = 64;
  double lora_alpha = 16.0, lora_dropout = 0.0;
};

int run_train_model(const TrainModelArgs& a) {
  if (int rc = require_file(a.dataset, "dataset")) return rc;
  if (int rc = require_file(a.tokenizer, "tokenizer checkpoint")) return rc;
  if (a.lora && a.base.empty()) {
    std::fprintf(stderr, "error: --lora requires --base checkpoint to adapt\n");
    return kExitFailure;
  }
  if (!a.base.empty()) {
    if (int rc = require_file(a.base, "base checkpoint")) return rc;
  }

  model::TrainConfig train_cfg;
  if (a.ablation == "full" || a.ablation == "unrefined_prompts") {
    train_cfg.w_text = 1.0;
    train_cfg.w_pose = 1.0;
  } else if (a.ablation == "text_only") {
    train_cfg.w_text = 1.0;
    train_cfg.w_pose = 0.0;
  } else if (a.ablation == "pose_only") {
    train_cfg.w_text = 0.0;
    train_cfg.w_pose = 1.0;
  } else {
    std::fprintf(stderr, "error: unknown ablation mode '%s'\n", a.ablation.c_str());
    return kExitFailure;
  }

  const auto tokenizer = vq::load_tokenizer(a.tokenizer);
  const auto triplets = load_kept(a.dataset);
  if (triplets.empty()) {
    std::fprintf(stderr, "error: dataset has no kept triplets\n");
    return kExitFailure;
  }

  // The unrefined ablation trains on the raw captions, no context clause.
  std::vector<std::string> detailed;
  for (const auto& t : triplets) {
    detailed.push_back(a.ablation == "unrefined_prompts" ? synth::caption_pose(t.pose)
                                                         : t.detailed_prompt);
  }

  std::vector<std::string> corpus;
  for (const auto& t : triplets) corpus.push_back(t.abstract_prompt);
  corpus.insert(corpus.end(), detailed.begin(), detailed.end());
  const auto vocab = text::build_vocab(corpus, tokenizer.config.codebook_size);

  std::vector<model::TrainExample> examples;
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    examples.push_back(gen::make_train_example(triplets[i].abstract_prompt, detailed[i],
                                               triplets[i].pose, vocab, tokenizer));
  }

  model::ModelParams init;
  if (a.base.empty()) {
    model::ModelConfig arch;
    arch.layers = a.layers;
    arch.heads = a.heads;
    arch.width = a.width;
    arch.mlp = a.mlp;
    arch.context = a.context;
    arch.vocab = vocab.size();
    arch.n_pose_codes = tokenizer.config.codebook_size;
    arch.n_queries = tokenizer.config.n_tokens;
    init = model::init_model(arch, a.seed);
  } else {
    init = model::load_model(a.base).params;
  }

  train_cfg.lr = a.lr;
  train_cfg.momentum = a.momentum;
  train_cfg.batch = a.batch;
  train_cfg.epochs = a.epochs;
  train_cfg.seed = a.seed;
  train_cfg.lora.enabled = a.lora;
  train_cfg.lora.rank = a.lora_rank;
  train_cfg.lora.alpha = a.lora_alpha;
  train_cfg.lora.dropout = a.lora_dropout;

  const auto result = model::train(examples, init, train_cfg);

  ensure_out_dir(a.out);
  const std::string ckpt = join_path(a.out, "model.ckpt");
  model::save_model(result.params, a.lora ? &result.adapters : nullptr, ckpt);
  text::save_vocab(vocab, join_path(a.out, "vocab.txt"));
  {
    std::ofstream csv(join_path(a.out, "model_loss.csv"));
    csv << "epoch,L_text,L_pose,total\n";
    char line[160];
    for (const auto& e : result.log) {
      std::snprintf(line, sizeof(line), "%d,%.10g,%.10g,%.10g\n", e.epoch, e.text_loss,
                    e.pose_loss,
                    train_cfg.w_text * e.text_loss + train_cfg.w_pose * e.pose_loss);
      csv << line;
    }
  }
  if (result.diverged) {
    std::fprintf(stderr, "error: training diverged (%s); last checkpoint at %s\n",
                 result.message.c_str(), ckpt.c_str());
    return kExitDiverged;
  }
  std::printf("trained %s model on %zu examples; final L_text %.6g, L_pose %.6g\n",
              a.ablation.c_str(), examples.size(),
              result.log.empty() ? 0.0 : result.log.back().text_loss,
              result.log.empty() ? 0.0 : result.log.back().pose_loss);
  std::printf("wrote %s and %s\n", ckpt.c_str(), join_path(a.out, "vocab.txt").c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  std::string config, out = "out";
  std::string model = "out/model.ckpt";
  std::string tokenizer = "out/tokenizer.ckpt";
  std::string vocab = "out/vocab.txt";
  std::string prompt;
  std::string svg, obj;
  std::uint64_t seed = 0;
  double temperature = 0.0;
  int max_text_tokens = 128;
};

int run_generate(const GenerateArgs& a) {
  if (a.prompt.empty()) {
    std::fprintf(stderr, "error: --prompt is required (flag or config)\n");
    return kExitFailure;
  }
  if (int rc = require_file(a.model, "model checkpoint")) return rc;
  if (int rc = require_file(a.tokenizer, "tokenizer checkpoint")) return rc;
  if (int rc = require_file(a.vocab, "vocabulary")) return rc;

  const auto loaded = model::load_model(a.model);
  const auto tokenizer = vq::load_tokenizer(a.tokenizer);
  const auto vocab = text::load_vocab(a.vocab);

  gen::GenerationConfig cfg;
  cfg.max_text_tokens = a.max_text_tokens;
  cfg.temperature = a.temperature;
  cfg.seed = a.seed;

  gen::GenerationResult result;
  try {
    result = gen::generate(a.prompt, vocab, loaded.params,
                           loaded.has_adapters ? &loaded.adapters : nullptr, tokenizer, cfg);
  } catch (const gen::ReasoningOverflow& e) {
    std::fprintf(stderr, "error: %s\npartial text: %s\n", e.what(), e.partial_text.c_str());
    return kExitFailure;
  }

  ensure_out_dir(a.out);
  const std::string out_json = join_path(a.out, "generation.json");
  std::ofstream(out_json) << gen::to_json(result).dump(2) << "\n";
  if (!a.obj.empty()) write_obj(result.pose, geometry::default_skeleton(), a.obj);
  if (!a.svg.empty()) write_svg(result.pose, geometry::default_skeleton(), a.svg);

  std::printf("prompt:   %s\n", result.abstract_prompt.c_str());
  std::printf("detailed: %s\n", result.detailed_prompt.c_str());
  std::printf("pose tokens: %zu\nwrote %s\n", result.pose_tokens.size(), out_json.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string config, out = "out";
  std::string model = "out/model.ckpt";
  std::string tokenizer = "out/tokenizer.ckpt";
  std::string vocab = "out/vocab.txt";
  std::string dataset = "out/dataset.jsonl";
  std::string method = "ours";
  int limit = -1;
  int max_text_tokens = 128;
};

int run_evaluate(const EvaluateArgs& a) {
  if (int rc = require_file(a.model, "model checkpoint")) return rc;
  if (int rc = require_file(a.tokenizer, "tokenizer checkpoint")) return rc;
  if (int rc = require_file(a.vocab, "vocabulary")) return rc;
  if (int rc = require_file(a.dataset, "dataset")) return rc;

  const auto loaded = model::load_model(a.model);
  const auto tokenizer = vq::load_tokenizer(a.tokenizer);
  const auto vocab = text::load_vocab(a.vocab);
  auto triplets = load_kept(a.dataset);
  if (a.limit >= 0 && static_cast<int>(triplets.size()) > a.limit) triplets.resize(a.limit);
  if (triplets.empty()) {
    std::fprintf(stderr, "error: dataset has no kept triplets\n");
    return kExitFailure;
  }

  gen::GenerationConfig cfg;
  cfg.max_text_tokens = a.max_text_tokens;

  std::vector<geometry::PoseParams> gt_poses, gen_poses;
  std::vector<std::string> gt_texts, gen_texts;
  int overflowed = 0;
  for (const auto& t : triplets) {
    try {
      const auto r = gen::generate(t.abstract_prompt, vocab, loaded.params,
                                   loaded.has_adapters ? &loaded.adapters : nullptr,
                                   tokenizer, cfg);
      gt_poses.push_back(t.pose);
      gt_texts.push_back(t.detailed_prompt);
      gen_poses.push_back(r.pose);
      gen_texts.push_back(r.detailed_prompt);
    } catch (const gen::ReasoningOverflow&) {
      ++overflowed;
    }
  }
  if (gt_poses.empty()) {
    std::fprintf(stderr, "error: every generation overflowed the text cap\n");
    return kExitFailure;
  }

  const auto report = metrics::evaluate(gt_poses, gen_poses, gt_texts, gen_texts, vocab);
  ensure_out_dir(a.out);
  const std::string out_json = join_path(a.out, "metrics.json");
  std::ofstream(out_json) << metrics::to_json(report) << "\n";

  std::printf("%-24s %10s %12s %10s %10s\n", "method", "PFD", "MPJPE(mm)", "TFD", "MFD");
  std::printf("%-24s %10.4f %12.2f %10.4f %10.4f\n", a.method.c_str(), report.pfd,
              report.mpjpe_mm, report.tfd, report.mfd);
  if (overflowed > 0) std::printf("(%d generations overflowed and were skipped)\n", overflowed);
  std::printf("evaluated %d samples; wrote %s\n", report.n_samples, out_json.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// export

struct ExportArgs {
  std::string config, out = "out";
  std::string input = "out/generation.json";
  std::string obj, svg;
};

int run_export(const ExportArgs& a) {
  if (int rc = require_file(a.input, "generation result")) return rc;
  std::ifstream in(a.input);
  const json j = json::parse(in);
  const auto flat = j.at("pose").get<std::vector<double>>();
  if (flat.size() != geometry::kPoseDim) {
    std::fprintf(stderr, "error: pose field must hold %d values\n", geometry::kPoseDim);
    return kExitFailure;
  }
  const auto pose = geometry::PoseParams::from_flat(
      Eigen::Map<const Eigen::VectorXd>(flat.data(), geometry::kPoseDim));

  ensure_out_dir(a.out);
  std::string obj = a.obj, svg = a.svg;
  if (obj.empty() && svg.empty()) obj = join_path(a.out, "pose.obj");
  if (!obj.empty()) {
    write_obj(pose, geometry::default_skeleton(), obj);
    std::printf("wrote %s\n", obj.c_str());
  }
  if (!svg.empty()) {
    write_svg(pose, geometry::default_skeleton(), svg);
    std::printf("wrote %s\n", svg.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"text-to-pose generation toolkit"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  Overlay synth_ov;
  auto* synth_cmd = app.add_subcommand("synth", "synthesize the triplet dataset");
  synth_cmd->add_option("--config", synth_args.config, "JSON config file (flags win)");
  synth_ov.bind(*synth_cmd, "--out", synth_args.out, "output directory");
  synth_ov.bind(*synth_cmd, "--taxonomy", synth_args.taxonomy, "taxonomy file");
  synth_ov.bind(*synth_cmd, "--families", synth_args.families, "label-to-family table");
  synth_ov.bind(*synth_cmd, "--seed", synth_args.seed, "base seed");
  synth_ov.bind(*synth_cmd, "--limit", synth_args.limit, "cap on triplet count (-1 = all)");
  synth_ov.bind(*synth_cmd, "--sigma", synth_args.sigma, "per-joint jitter stddev");

  TrainTokArgs tok_args;
  Overlay tok_ov;
  auto* tok_cmd = app.add_subcommand("train-tokenizer", "train the pose tokenizer");
  tok_cmd->add_option("--config", tok_args.config, "JSON config file (flags win)");
  tok_ov.bind(*tok_cmd, "--out", tok_args.out, "output directory");
  tok_ov.bind(*tok_cmd, "--dataset", tok_args.dataset, "dataset JSONL");
  tok_ov.bind(*tok_cmd, "--seed", tok_args.seed, "init and shuffle seed");
  tok_ov.bind(*tok_cmd, "--codebook", tok_args.codebook, "codebook size K");
  tok_ov.bind(*tok_cmd, "--latent", tok_args.latent, "latent dim per token");
  tok_ov.bind(*tok_cmd, "--tokens", tok_args.tokens, "tokens per pose L");
  tok_ov.bind(*tok_cmd, "--hidden", tok_args.hidden, "encoder/decoder hidden width");
  tok_ov.bind(*tok_cmd, "--lr", tok_args.lr, "learning rate");
  tok_ov.bind(*tok_cmd, "--beta", tok_args.beta, "commitment weight");
  tok_ov.bind(*tok_cmd, "--epochs", tok_args.epochs, "training epochs");
  tok_ov.bind(*tok_cmd, "--batch", tok_args.batch, "batch size");
  tok_ov.bind(*tok_cmd, "--early-stop", tok_args.early_stop, "stop below this recon mse");

  TrainModelArgs model_args;
  Overlay model_ov;
  auto* model_cmd = app.add_subcommand("train-model", "train the reasoning model");
  model_cmd->add_option("--config", model_args.config, "JSON config file (flags win)");
  model_ov.bind(*model_cmd, "--out", model_args.out, "output directory");
  model_ov.bind(*model_cmd, "--dataset", model_args.dataset, "dataset JSONL");
  model_ov.bind(*model_cmd, "--tokenizer", model_args.tokenizer, "tokenizer checkpoint");
  model_ov.bind(*model_cmd, "--base", model_args.base, "checkpoint to continue from");
  model_ov.bind(*model_cmd, "--ablation", model_args.ablation,
                "full | text_only | pose_only | unrefined_prompts");
  model_ov.bind(*model_cmd, "--seed", model_args.seed, "init and shuffle seed");
  model_ov.bind(*model_cmd, "--layers", model_args.layers, "transformer layers");
  model_ov.bind(*model_cmd, "--heads", model_args.heads, "attention heads");
  model_ov.bind(*model_cmd, "--width", model_args.width, "model width");
  model_ov.bind(*model_cmd, "--mlp", model_args.mlp, "mlp width (0 = 4x width)");
  model_ov.bind(*model_cmd, "--context", model_args.context, "max text positions");
  model_ov.bind(*model_cmd, "--lr", model_args.lr, "learning rate");
  model_ov.bind(*model_cmd, "--momentum", model_args.momentum, "SGD momentum");
  model_ov.bind(*model_cmd, "--epochs", model_args.epochs, "training epochs");
  model_ov.bind(*model_cmd, "--batch", model_args.batch, "batch size");
  model_ov.bind_flag(*model_cmd, "--lora", model_args.lora, "train adapters, freeze base");
  model_ov.bind(*model_cmd, "--lora-rank", model_args.lora_rank, "adapter rank");
  model_ov.bind(*model_cmd, "--lora-alpha", model_args.lora_alpha, "adapter alpha");
  model_ov.bind(*model_cmd, "--lora-dropout", model_args.lora_dropout, "adapter dropout");

  GenerateArgs gen_args;
  Overlay gen_ov;
  auto* gen_cmd = app.add_subcommand("generate", "generate a pose from an abstract prompt");
  gen_cmd->add_option("--config", gen_args.config, "JSON config file (flags win)");
  gen_ov.bind(*gen_cmd, "--out", gen_args.out, "output directory");
  gen_ov.bind(*gen_cmd, "--model", gen_args.model, "model checkpoint");
  gen_ov.bind(*gen_cmd, "--tokenizer", gen_args.tokenizer, "tokenizer checkpoint");
  gen_ov.bind(*gen_cmd, "--vocab", gen_args.vocab, "vocabulary file");
  gen_ov.bind(*gen_cmd, "--prompt", gen_args.prompt, "abstract prompt");
  gen_ov.bind(*gen_cmd, "--seed", gen_args.seed, "sampling seed");
  gen_ov.bind(*gen_cmd, "--temperature", gen_args.temperature, "0 = greedy");
  gen_ov.bind(*gen_cmd, "--max-text-tokens", gen_args.max_text_tokens, "reasoning length cap");
  gen_ov.bind(*gen_cmd, "--obj", gen_args.obj, "also write joints OBJ here");
  gen_ov.bind(*gen_cmd, "--svg", gen_args.svg, "also write stick-figure SVG here");

  EvaluateArgs eval_args;
  Overlay eval_ov;
  auto* eval_cmd = app.add_subcommand("evaluate", "score generations against a dataset");
  eval_cmd->add_option("--config", eval_args.config, "JSON config file (flags win)");
  eval_ov.bind(*eval_cmd, "--out", eval_args.out, "output directory");
  eval_ov.bind(*eval_cmd, "--model", eval_args.model, "model checkpoint");
  eval_ov.bind(*eval_cmd, "--tokenizer", eval_args.tokenizer, "tokenizer checkpoint");
  eval_ov.bind(*eval_cmd, "--vocab", eval_args.vocab, "vocabulary file");
  eval_ov.bind(*eval_cmd, "--dataset", eval_args.dataset, "dataset JSONL");
  eval_ov.bind(*eval_cmd, "--method", eval_args.method, "row label in the report table");
  eval_ov.bind(*eval_cmd, "--limit", eval_args.limit, "evaluate first N samples (-1 = all)");
  eval_ov.bind(*eval_cmd, "--max-text-tokens", eval_args.max_text_tokens, "reasoning cap");

  ExportArgs export_args;
  Overlay export_ov;
  auto* export_cmd = app.add_subcommand("export", "convert a generation result to OBJ/SVG");
  export_cmd->add_option("--config", export_args.config, "JSON config file (flags win)");
  export_ov.bind(*export_cmd, "--out", export_args.out, "output directory");
  export_ov.bind(*export_cmd, "--input", export_args.input, "generation result JSON");
  export_ov.bind(*export_cmd, "--obj", export_args.obj, "OBJ output path");
  export_ov.bind(*export_cmd, "--svg", export_args.svg, "SVG output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth_cmd->parsed()) {
      synth_ov.apply(synth_args.config);
      return run_synth(synth_args);
    }
    if (tok_cmd->parsed()) {
      tok_ov.apply(tok_args.config);
      return run_train_tokenizer(tok_args);
    }
    if (model_cmd->parsed()) {
      model_ov.apply(model_args.config);
      return run_train_model(model_args);
    }
    if (gen_cmd->parsed()) {
      gen_ov.apply(gen_args.config);
      return run_generate(gen_args);
    }
    if (eval_cmd->parsed()) {
      eval_ov.apply(eval_args.config);
      return run_evaluate(eval_args);
    }
    if (export_cmd->parsed()) {
      export_ov.apply(export_args.config);
      return run_export(export_args);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
