#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "posegen/geometry.hpp"
#include "posegen/text_codec.hpp"

namespace posegen::metrics {

/// Reported values carry fixed unit conventions: joint error is converted to
/// millimeters, pose feature distance is scaled by 1000, text and cross-modal
/// feature distances by 10.
inline constexpr double kMpjpeScale = 1000.0;
inline constexpr double kPfdScale = 1000.0;
inline constexpr double kTfdScale = 10.0;
inline constexpr double kMfdScale = 10.0;

/// Aggregate metrics over an evaluation set, post-scaling, plus the
/// per-sample values they average.
struct MetricReport {
  double pfd = 0.0;
  double tfd = 0.0;
  double mfd = 0.0;
  double mpjpe_mm = 0.0;
  int n_samples = 0;
  std::vector<double> per_sample_pfd;
  std::vector<double> per_sample_tfd;
  std::vector<double> per_sample_mfd;
  std::vector<double> per_sample_mpjpe_mm;
};

std::string to_json(const MetricReport& report);
MetricReport report_from_json(const std::string& json);

/// Mean joint position error in millimeters. The prediction's global root
/// rotation is replaced by the ground truth's before forward kinematics, so
/// the value is blind to the predicted root.
double mpjpe_mm(const geometry::PoseParams& pred, const geometry::PoseParams& gt,
                const geometry::Skeleton& skel = geometry::default_skeleton());

/// Handcrafted pose embedding: root-zeroed joint positions (72), per-joint
/// flexion magnitudes (24), and 8 inter-limb distances (wrist-wrist,
/// ankle-ankle, elbow-elbow, knee-knee, each wrist to the head, each wrist to
/// the same-side ankle), L2-normalized. Invariant to the global root rotation
/// by construction. Throws std::domain_error on a degenerate zero feature.
Eigen::VectorXd pose_feature(const geometry::PoseParams& pose,
                             const geometry::Skeleton& skel = geometry::default_skeleton());

/// Bag-of-words term frequencies over the vocabulary's word range plus one
/// leading <unk> bucket, L2-normalized. Throws std::invalid_argument when the
/// text normalizes to no words.
Eigen::VectorXd text_feature(const std::string& text, const text::SharedVocabulary& vocab);

/// Euclidean distance; throws std::invalid_argument on dimension mismatch.
double feature_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Mean of per-pair Euclidean distances. Throws std::invalid_argument on
/// length mismatch or empty sets.
double mean_paired_distance(const std::vector<Eigen::VectorXd>& a,
                            const std::vector<Eigen::VectorXd>& b);

/// Mean paired pose-feature distance x 1000.
double pfd(const std::vector<geometry::PoseParams>& a,
           const std::vector<geometry::PoseParams>& b,
           const geometry::Skeleton& skel = geometry::default_skeleton());

/// Mean paired text-feature distance x 10.
double tfd(const std::vector<std::string>& a, const std::vector<std::string>& b,
           const text::SharedVocabulary& vocab);

/// Cross-modal distance: each pose is bridged to text space through the
/// rule-based captioner, then compared to its paired description. x 10.
double mfd(const std::vector<std::string>& descriptions,
           const std::vector<geometry::PoseParams>& poses,
           const text::SharedVocabulary& vocab);

/// Full report over paired ground-truth and generated sets. All four inputs
/// must share one length; throws std::invalid_argument otherwise or on empty
/// sets.
MetricReport evaluate(const std::vector<geometry::PoseParams>& gt_poses,
                      const std::vector<geometry::PoseParams>& gen_poses,
                      const std::vector<std::string>& gt_texts,
                      const std::vector<std::string>& gen_texts,
                      const text::SharedVocabulary& vocab,
                      const geometry::Skeleton& skel = geometry::default_skeleton());

}  // namespace posegen::metrics
