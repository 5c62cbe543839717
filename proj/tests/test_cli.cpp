#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "posegen/geometry.hpp"
#include "posegen/synth.hpp"

using namespace posegen;
namespace fs = std::filesystem;

namespace {

const std::string kBin = POSEGEN_BIN;
const std::string kTaxonomy = std::string(POSEGEN_DATA_DIR) + "/taxonomy.txt";
const std::string kFamilies = std::string(POSEGEN_DATA_DIR) + "/pose_families.txt";

int run(const std::string& args) {
  const std::string cmd = kBin + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string run_capture(const std::string& args, int* rc = nullptr) {
  const std::string path = (fs::temp_directory_path() / "posegen_cli_stdout.txt").string();
  const std::string cmd = kBin + " " + args + " > " + path + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  if (rc) *rc = WEXITSTATUS(status);
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// One small trained pipeline shared by the generation-side cases.
struct Workspace {
  std::string dir;
  std::string dataset, tokenizer, model, vocab;
  std::string first_abstract;

  Workspace() {
    dir = (fs::temp_directory_path() / "posegen_cli_ws").string();
    fs::remove_all(dir);
    const std::string common = " --out " + dir + " --taxonomy " + kTaxonomy +
                               " --families " + kFamilies;
    REQUIRE(run("synth" + common + " --limit 6 --seed 7") == 0);
    dataset = dir + "/dataset.jsonl";
    REQUIRE(run("train-tokenizer --out " + dir + " --dataset " + dataset +
                " --codebook 16 --latent 6 --tokens 8 --hidden 64 --lr 0.1"
                " --epochs 2500 --batch 6 --seed 11 --early-stop 1e-5") == 0);
    tokenizer = dir + "/tokenizer.ckpt";
    REQUIRE(run("train-model --out " + dir + " --dataset " + dataset + " --tokenizer " +
                tokenizer + " --width 32 --epochs 350 --lr 0.3 --batch 3 --seed 2") == 0);
    model = dir + "/model.ckpt";
    vocab = dir + "/vocab.txt";
    first_abstract = synth::load_triplets(dataset).front().abstract_prompt;
  }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("synth is reproducible and honors the limit flag") {
  const std::string dir_a = (fs::temp_directory_path() / "posegen_cli_sa").string();
  const std::string dir_b = (fs::temp_directory_path() / "posegen_cli_sb").string();
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  const std::string tail =
      " --taxonomy " + kTaxonomy + " --families " + kFamilies + " --limit 16 --seed 7";
  CHECK(run("synth --out " + dir_a + tail) == 0);
  CHECK(run("synth --out " + dir_b + tail) == 0);

  std::ifstream in(dir_a + "/dataset.jsonl");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 16);
  CHECK(slurp(dir_a + "/dataset.jsonl") == slurp(dir_b + "/dataset.jsonl"));
  CHECK(fs::exists(dir_a + "/review.csv"));
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("synth summary counts every category of the full taxonomy") {
  const std::string dir = (fs::temp_directory_path() / "posegen_cli_full").string();
  fs::remove_all(dir);
  int rc = -1;
  const auto out = run_capture(
      "synth --out " + dir + " --taxonomy " + kTaxonomy + " --families " + kFamilies, &rc);
  CHECK(rc == 0);
  CHECK(out.find("synthesized 550 triplets") != std::string::npos);
  CHECK(out.find("Martial Arts") != std::string::npos);
  CHECK(out.find("kept 550, filtered 0") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("an invalid taxonomy exits with code 2") {
  const std::string bad = (fs::temp_directory_path() / "posegen_cli_bad_tax.txt").string();
  std::ofstream(bad) << "Lonely Category:\n  only label\n";
  CHECK(run("synth --out /tmp/posegen_cli_unused --taxonomy " + bad + " --families " +
            kFamilies) == 2);
  fs::remove(bad);
}

TEST_CASE("missing upstream artifacts exit with code 3") {
  CHECK(run("train-tokenizer --dataset /nonexistent/d.jsonl --out /tmp/posegen_cli_x") == 3);
  CHECK(run("train-model --dataset /nonexistent/d.jsonl --tokenizer /nonexistent/t.ckpt"
            " --out /tmp/posegen_cli_x") == 3);
  CHECK(run("generate --model /nonexistent/m.ckpt --tokenizer /nonexistent/t.ckpt"
            " --vocab /nonexistent/v.txt --prompt \"Generate the pose of squatting\""
            " --out /tmp/posegen_cli_x") == 3);
  CHECK(run("evaluate --model /nonexistent/m.ckpt --out /tmp/posegen_cli_x") == 3);
  CHECK(run("export --input /nonexistent/g.json --out /tmp/posegen_cli_x") == 3);
}

TEST_CASE("a config file fills flags and explicit flags win") {
  const std::string dir = (fs::temp_directory_path() / "posegen_cli_cfg").string();
  fs::remove_all(dir);
  const std::string cfg_path = (fs::temp_directory_path() / "posegen_cli_cfg.json").string();
  std::ofstream(cfg_path) << nlohmann::json{{"limit", 5},
                                            {"seed", 7},
                                            {"taxonomy", kTaxonomy},
                                            {"families", kFamilies},
                                            {"out", dir}}
                                 .dump();

  CHECK(run("synth --config " + cfg_path) == 0);
  std::ifstream in(dir + "/dataset.jsonl");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 5);

  fs::remove_all(dir);
  CHECK(run("synth --config " + cfg_path + " --limit 7") == 0);
  std::ifstream in2(dir + "/dataset.jsonl");
  lines = 0;
  for (std::string line; std::getline(in2, line);) ++lines;
  CHECK(lines == 7);
  fs::remove_all(dir);
  fs::remove(cfg_path);
}

TEST_CASE("training writes checkpoints and loss logs") {
  auto& w = ws();
  CHECK(fs::exists(w.tokenizer));
  CHECK(fs::exists(w.model));
  CHECK(fs::exists(w.vocab));

  const auto tok_csv = slurp(w.dir + "/tokenizer_loss.csv");
  CHECK(tok_csv.rfind("epoch,reconstruction,codebook,commitment,total\n", 0) == 0);
  const auto model_csv = slurp(w.dir + "/model_loss.csv");
  CHECK(model_csv.rfind("epoch,L_text,L_pose,total\n", 0) == 0);
  CHECK(std::count(model_csv.begin(), model_csv.end(), '\n') > 10);
}

TEST_CASE("generate emits a result with one token per query slot") {
  auto& w = ws();
  int rc = -1;
  const auto out = run_capture("generate --out " + w.dir + " --model " + w.model +
                                   " --tokenizer " + w.tokenizer + " --vocab " + w.vocab +
                                   " --prompt \"" + w.first_abstract + "\" --svg " + w.dir +
                                   "/fig.svg --obj " + w.dir + "/fig.obj",
                               &rc);
  CHECK(rc == 0);
  CHECK(out.find("pose tokens: 8") != std::string::npos);

  const auto j = nlohmann::json::parse(slurp(w.dir + "/generation.json"));
  CHECK(j.at("abstract_prompt").get<std::string>() == w.first_abstract);
  CHECK(j.at("pose_tokens").size() == 8);
  CHECK(j.at("pose").size() == 72);
  CHECK(j.at("joints").size() == 72);
  CHECK_FALSE(j.at("detailed_prompt").get<std::string>().empty());

  CHECK(slurp(w.dir + "/fig.svg").find("<svg") == 0);
  CHECK(slurp(w.dir + "/fig.obj").find("\nv ") != std::string::npos);
}

TEST_CASE("generation is reproducible byte for byte") {
  auto& w = ws();
  const std::string args = "--model " + w.model + " --tokenizer " + w.tokenizer +
                           " --vocab " + w.vocab + " --prompt \"" + w.first_abstract + "\"";
  CHECK(run("generate --out " + w.dir + "/g1 " + args) == 0);
  CHECK(run("generate --out " + w.dir + "/g2 " + args) == 0);
  CHECK(slurp(w.dir + "/g1/generation.json") == slurp(w.dir + "/g2/generation.json"));
}

TEST_CASE("evaluate writes a metric report and a summary table") {
  auto& w = ws();
  int rc = -1;
  const auto out = run_capture("evaluate --out " + w.dir + " --model " + w.model +
                                   " --tokenizer " + w.tokenizer + " --vocab " + w.vocab +
                                   " --dataset " + w.dataset + " --method overfit",
                               &rc);
  CHECK(rc == 0);
  CHECK(out.find("method") != std::string::npos);
  CHECK(out.find("MPJPE(mm)") != std::string::npos);
  CHECK(out.find("overfit") != std::string::npos);

  const auto j = nlohmann::json::parse(slurp(w.dir + "/metrics.json"));
  CHECK(j.at("n_samples").get<int>() == 6);
  // The model overfits six training captions, so generated text matches.
  CHECK(j.at("tfd").get<double>() == doctest::Approx(0.0));
}

TEST_CASE("export of the zero pose reproduces cumulative rest offsets") {
  auto& w = ws();
  nlohmann::json j;
  j["abstract_prompt"] = "Generate the pose of standing";
  j["detailed_prompt"] = "the arms are straight.";
  j["pose_tokens"] = std::vector<int>(8, 0);
  j["pose"] = std::vector<double>(72, 0.0);
  j["joints"] = std::vector<double>(72, 0.0);
  const std::string in_path = w.dir + "/zero_gen.json";
  std::ofstream(in_path) << j.dump();

  const std::string obj_path = w.dir + "/zero.obj";
  CHECK(run("export --input " + in_path + " --out " + w.dir + " --obj " + obj_path) == 0);

  const auto& skel = geometry::default_skeleton();
  const auto expected = geometry::forward_kinematics(geometry::PoseParams::zero(), skel);
  std::ifstream obj(obj_path);
  std::string tag;
  int vertices = 0, edges = 0;
  for (std::string line; std::getline(obj, line);) {
    std::istringstream ss(line);
    ss >> tag;
    if (tag == "v") {
      double x, y, z;
      ss >> x >> y >> z;
      REQUIRE(vertices < geometry::kNumJoints);
      CHECK(x == doctest::Approx(expected.positions[vertices].x()).epsilon(1e-8));
      CHECK(y == doctest::Approx(expected.positions[vertices].y()).epsilon(1e-8));
      CHECK(z == doctest::Approx(expected.positions[vertices].z()).epsilon(1e-8));
      ++vertices;
    } else if (tag == "l") {
      ++edges;
    }
  }
  CHECK(vertices == 24);
  CHECK(edges == 23);
}

TEST_CASE("a diverging run exits with code 4 and keeps a checkpoint") {
  auto& w = ws();
  const std::string dir = w.dir + "/nan";
  CHECK(run("train-model --out " + dir + " --dataset " + w.dataset + " --tokenizer " +
            w.tokenizer + " --width 32 --epochs 20 --lr 1e300 --batch 3 --seed 2") == 4);
  CHECK(fs::exists(dir + "/model.ckpt"));
}

TEST_CASE("ablation modes train and log both loss channels") {
  auto& w = ws();
  for (const std::string mode : {"text_only", "pose_only", "unrefined_prompts"}) {
    const std::string dir = w.dir + "/" + mode;
    CHECK(run("train-model --out " + dir + " --dataset " + w.dataset + " --tokenizer " +
              w.tokenizer + " --width 32 --epochs 40 --lr 0.3 --batch 3 --seed 2"
              " --ablation " + mode) == 0);
    CHECK(fs::exists(dir + "/model.ckpt"));
  }
  CHECK(run("train-model --out " + w.dir + "/x --dataset " + w.dataset + " --tokenizer " +
            w.tokenizer + " --ablation bogus") == 1);
}
