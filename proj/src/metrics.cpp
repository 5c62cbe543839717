#include "posegen/metrics.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <stdexcept>

#include "posegen/synth.hpp"

namespace posegen::metrics {

namespace {

// Inter-limb distance pairs, by joint index: wrists, ankles, elbows, knees,
// each wrist to the head, each wrist to the same-side ankle.
constexpr std::array<std::pair<int, int>, 8> kLimbPairs = {{
    {20, 21}, {7, 8}, {18, 19}, {4, 5}, {20, 15}, {21, 15}, {20, 7}, {21, 8},
}};

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void require_paired(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
  if (a == 0) throw std::invalid_argument(std::string(what) + ": empty set");
}

}  // namespace

std::string to_json(const MetricReport& r) {
  nlohmann::json j;
  j["pfd"] = r.pfd;
  j["tfd"] = r.tfd;
  j["mfd"] = r.mfd;
  j["mpjpe_mm"] = r.mpjpe_mm;
  j["n_samples"] = r.n_samples;
  j["per_sample"]["pfd"] = r.per_sample_pfd;
  j["per_sample"]["tfd"] = r.per_sample_tfd;
  j["per_sample"]["mfd"] = r.per_sample_mfd;
  j["per_sample"]["mpjpe_mm"] = r.per_sample_mpjpe_mm;
  return j.dump(2);
}

MetricReport report_from_json(const std::string& json) {
  const auto j = nlohmann::json::parse(json);
  MetricReport r;
  r.pfd = j.at("pfd").get<double>();
  r.tfd = j.at("tfd").get<double>();
  r.mfd = j.at("mfd").get<double>();
  r.mpjpe_mm = j.at("mpjpe_mm").get<double>();
  r.n_samples = j.at("n_samples").get<int>();
  const auto& per = j.at("per_sample");
  r.per_sample_pfd = per.at("pfd").get<std::vector<double>>();
  r.per_sample_tfd = per.at("tfd").get<std::vector<double>>();
  r.per_sample_mfd = per.at("mfd").get<std::vector<double>>();
  r.per_sample_mpjpe_mm = per.at("mpjpe_mm").get<std::vector<double>>();
  return r;
}

double mpjpe_mm(const geometry::PoseParams& pred, const geometry::PoseParams& gt,
                const geometry::Skeleton& skel) {
  const auto aligned = geometry::align_root(pred, gt);
  const auto jp = geometry::forward_kinematics(aligned, skel);
  const auto jg = geometry::forward_kinematics(gt, skel);
  double total = 0.0;
  for (int j = 0; j < geometry::kNumJoints; ++j) {
    total += (jp.positions[j] - jg.positions[j]).norm();
  }
  return kMpjpeScale * total / geometry::kNumJoints;
}

Eigen::VectorXd pose_feature(const geometry::PoseParams& pose,
                             const geometry::Skeleton& skel) {
  geometry::PoseParams zeroed = pose;
  zeroed.rotations[0].setZero();
  const auto joints = geometry::forward_kinematics(zeroed, skel);

  Eigen::VectorXd f(geometry::kPoseDim + geometry::kNumJoints + kLimbPairs.size());
  int k = 0;
  for (const auto& p : joints.positions) {
    f(k++) = p.x();
    f(k++) = p.y();
    f(k++) = p.z();
  }
  for (const auto& r : zeroed.rotations) f(k++) = r.norm();
  for (const auto& [a, b] : kLimbPairs) {
    f(k++) = (joints.positions[a] - joints.positions[b]).norm();
  }

  const double norm = f.norm();
  if (norm < 1e-12) throw std::domain_error("pose_feature: zero feature");
  return f / norm;
}

Eigen::VectorXd text_feature(const std::string& text, const text::SharedVocabulary& vocab) {
  const auto words = text::split_words(text::normalize(text));
  if (words.empty()) throw std::invalid_argument("text_feature: no words");

  // Slot 0 collects out-of-vocabulary words; known words follow in id order.
  Eigen::VectorXd f = Eigen::VectorXd::Zero(vocab.word_count() + 1);
  for (const auto& w : words) {
    const auto it = vocab.word_to_id.find(w);
    f(it == vocab.word_to_id.end() ? 0 : it->second - text::SharedVocabulary::kNumSpecials + 1) += 1.0;
  }
  return f / f.norm();
}

double feature_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("feature_distance: dimension mismatch");
  return (a - b).norm();
}

double mean_paired_distance(const std::vector<Eigen::VectorXd>& a,
                            const std::vector<Eigen::VectorXd>& b) {
  require_paired(a.size(), b.size(), "mean_paired_distance");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += feature_distance(a[i], b[i]);
  return total / static_cast<double>(a.size());
}

double pfd(const std::vector<geometry::PoseParams>& a,
           const std::vector<geometry::PoseParams>& b, const geometry::Skeleton& skel) {
  require_paired(a.size(), b.size(), "pfd");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    total += feature_distance(pose_feature(a[i], skel), pose_feature(b[i], skel));
  }
  return kPfdScale * total / static_cast<double>(a.size());
}

double tfd(const std::vector<std::string>& a, const std::vector<std::string>& b,
           const text::SharedVocabulary& vocab) {
  require_paired(a.size(), b.size(), "tfd");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    total += feature_distance(text_feature(a[i], vocab), text_feature(b[i], vocab));
  }
  return kTfdScale * total / static_cast<double>(a.size());
}

double mfd(const std::vector<std::string>& descriptions,
           const std::vector<geometry::PoseParams>& poses,
           const text::SharedVocabulary& vocab) {
  require_paired(descriptions.size(), poses.size(), "mfd");
  double total = 0.0;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    total += feature_distance(text_feature(descriptions[i], vocab),
                              text_feature(synth::caption_pose(poses[i]), vocab));
  }
  return kMfdScale * total / static_cast<double>(poses.size());
}

MetricReport evaluate(const std::vector<geometry::PoseParams>& gt_poses,
                      const std::vector<geometry::PoseParams>& gen_poses,
                      const std::vector<std::string>& gt_texts,
                      const std::vector<std::string>& gen_texts,
                      const text::SharedVocabulary& vocab, const geometry::Skeleton& skel) {
  require_paired(gt_poses.size(), gen_poses.size(), "evaluate poses");
  require_paired(gt_texts.size(), gen_texts.size(), "evaluate texts");
  require_paired(gt_poses.size(), gen_texts.size(), "evaluate modalities");

  MetricReport r;
  r.n_samples = static_cast<int>(gt_poses.size());
  for (std::size_t i = 0; i < gt_poses.size(); ++i) {
    r.per_sample_pfd.push_back(kPfdScale * feature_distance(pose_feature(gen_poses[i], skel),
                                                            pose_feature(gt_poses[i], skel)));
    r.per_sample_tfd.push_back(kTfdScale * feature_distance(text_feature(gen_texts[i], vocab),
                                                            text_feature(gt_texts[i], vocab)));
    r.per_sample_mfd.push_back(
        kMfdScale * feature_distance(text_feature(gen_texts[i], vocab),
                                     text_feature(synth::caption_pose(gen_poses[i]), vocab)));
    r.per_sample_mpjpe_mm.push_back(mpjpe_mm(gen_poses[i], gt_poses[i], skel));
  }
  r.pfd = mean(r.per_sample_pfd);
  r.tfd = mean(r.per_sample_tfd);
  r.mfd = mean(r.per_sample_mfd);
  r.mpjpe_mm = mean(r.per_sample_mpjpe_mm);
  return r;
}

}  // namespace posegen::metrics
