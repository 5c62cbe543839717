#pragma once

#include <Eigen/Core>
#include <array>
#include <string>
#include <vector>

namespace posegen::geometry {

inline constexpr int kNumJoints = 24;
inline constexpr int kPoseDim = 3 * kNumJoints;

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// 24 joint rotations in axis-angle form (radians * unit axis), SMPL joint
/// order, root first. Angles are not restricted to [0, pi] on storage;
/// canonicalize() is available when a canonical representative is needed.
struct PoseParams {
  std::array<Vec3, kNumJoints> rotations;

  // Eigen vectors do not zero themselves on value-initialization.
  PoseParams() {
    for (auto& r : rotations) r.setZero();
  }

  static PoseParams zero();
  static PoseParams from_flat(const Eigen::VectorXd& v);  // 72 values
  Eigen::VectorXd to_flat() const;
  bool all_finite() const;
};

/// Kinematic tree: parent indices (root sentinel -1) plus rest offsets of
/// each joint from its parent, in meters. Root offset is zero.
struct Skeleton {
  std::vector<std::string> names;
  std::vector<int> parent;
  std::vector<Vec3> rest_offsets;

  int joint_count() const { return static_cast<int>(parent.size()); }
  void validate() const;  // tree rooted at 0, parent[j] < j, zero root offset
};

struct JointPositions {
  std::array<Vec3, kNumJoints> positions;

  JointPositions() {
    for (auto& p : positions) p.setZero();
  }

  Eigen::VectorXd to_flat() const;
};

/// Synthetic 24-joint humanoid with the standard SMPL parent tree.
const Skeleton& default_skeleton();

Skeleton load_skeleton(const std::string& path);
void save_skeleton(const Skeleton& skel, const std::string& path);

/// Rodrigues formula. Uses a second-order expansion below angle 1e-8.
/// Throws std::invalid_argument on non-finite input.
Mat3 axis_angle_to_matrix(const Vec3& v);

/// Inverse of axis_angle_to_matrix; returned angle lies in [0, pi].
Vec3 matrix_to_axis_angle(const Mat3& r);

/// Wraps the rotation angle into [0, pi], flipping the axis if needed.
Vec3 canonicalize(const Vec3& v);

/// Positions each joint by composing rotations down the tree; the root sits
/// at the origin. Throws std::invalid_argument on joint-count mismatch.
JointPositions forward_kinematics(const PoseParams& pose, const Skeleton& skel);

/// Same recursion for an arbitrary joint count (used by small analytic
/// fixtures as well as the 24-joint wrapper above).
std::vector<Vec3> forward_kinematics_chain(const std::vector<Vec3>& rotations,
                                           const Skeleton& skel);

/// Replaces the predicted root rotation with the ground-truth one.
PoseParams align_root(const PoseParams& pred, const PoseParams& gt);

}  // namespace posegen::geometry
