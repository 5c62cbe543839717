#include "posegen/geometry.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace posegen::geometry {

PoseParams PoseParams::zero() { return PoseParams{}; }

PoseParams PoseParams::from_flat(const Eigen::VectorXd& v) {
  if (v.size() != kPoseDim) {
    throw std::invalid_argument("PoseParams::from_flat: expected 72 values, got " +
                                std::to_string(v.size()));
  }
  PoseParams p;
  for (int j = 0; j < kNumJoints; ++j) p.rotations[j] = v.segment<3>(3 * j);
  return p;
}

Eigen::VectorXd PoseParams::to_flat() const {
  Eigen::VectorXd v(kPoseDim);
  for (int j = 0; j < kNumJoints; ++j) v.segment<3>(3 * j) = rotations[j];
  return v;
}

bool PoseParams::all_finite() const {
  for (const auto& r : rotations)
    if (!r.allFinite()) return false;
  return true;
}

void Skeleton::validate() const {
  const int n = joint_count();
  if (n == 0) throw std::invalid_argument("skeleton: no joints");
  if (static_cast<int>(rest_offsets.size()) != n || static_cast<int>(names.size()) != n)
    throw std::invalid_argument("skeleton: field sizes disagree");
  if (parent[0] != -1) throw std::invalid_argument("skeleton: joint 0 must be the root");
  if (!rest_offsets[0].isZero(0.0))
    throw std::invalid_argument("skeleton: root rest offset must be zero");
  for (int j = 1; j < n; ++j) {
    if (parent[j] < 0 || parent[j] >= j)
      throw std::invalid_argument("skeleton: parent index of joint " + std::to_string(j) +
                                  " must precede it");
    if (!rest_offsets[j].allFinite())
      throw std::invalid_argument("skeleton: non-finite rest offset at joint " + std::to_string(j));
  }
}

Eigen::VectorXd JointPositions::to_flat() const {
  Eigen::VectorXd v(kPoseDim);
  for (int j = 0; j < kNumJoints; ++j) v.segment<3>(3 * j) = positions[j];
  return v;
}

namespace {

// Axes: +x left, +y up, +z forward. Offsets in meters.
struct JointSpec {
  const char* name;
  int parent;
  double x, y, z;
};

constexpr JointSpec kDefaultJoints[kNumJoints] = {
    {"pelvis", -1, 0.0, 0.0, 0.0},
    {"left_hip", 0, 0.09, -0.09, 0.0},
    {"right_hip", 0, -0.09, -0.09, 0.0},
    {"spine1", 0, 0.0, 0.11, 0.0},
    {"left_knee", 1, 0.0, -0.38, 0.0},
    {"right_knee", 2, 0.0, -0.38, 0.0},
    {"spine2", 3, 0.0, 0.12, 0.0},
    {"left_ankle", 4, 0.0, -0.40, 0.0},
    {"right_ankle", 5, 0.0, -0.40, 0.0},
    {"spine3", 6, 0.0, 0.13, 0.0},
    {"left_foot", 7, 0.0, -0.06, 0.13},
    {"right_foot", 8, 0.0, -0.06, 0.13},
    {"neck", 9, 0.0, 0.21, 0.0},
    {"left_collar", 9, 0.08, 0.12, 0.0},
    {"right_collar", 9, -0.08, 0.12, 0.0},
    {"head", 12, 0.0, 0.09, 0.0},
    {"left_shoulder", 13, 0.10, 0.02, 0.0},
    {"right_shoulder", 14, -0.10, 0.02, 0.0},
    {"left_elbow", 16, 0.26, 0.0, 0.0},
    {"right_elbow", 17, -0.26, 0.0, 0.0},
    {"left_wrist", 18, 0.25, 0.0, 0.0},
    {"right_wrist", 19, -0.25, 0.0, 0.0},
    {"left_hand", 20, 0.08, 0.0, 0.0},
    {"right_hand", 21, -0.08, 0.0, 0.0},
};

Skeleton build_default() {
  Skeleton s;
  s.names.reserve(kNumJoints);
  s.parent.reserve(kNumJoints);
  s.rest_offsets.reserve(kNumJoints);
  for (const auto& j : kDefaultJoints) {
    s.names.emplace_back(j.name);
    s.parent.push_back(j.parent);
    s.rest_offsets.emplace_back(j.x, j.y, j.z);
  }
  s.validate();
  return s;
}

}  // namespace

const Skeleton& default_skeleton() {
  static const Skeleton s = build_default();
  return s;
}

Skeleton load_skeleton(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open skeleton file: " + path);
  Skeleton s;
  std::string line;
  bool versioned = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.find("skeleton v1") != std::string::npos) versioned = true;
      continue;
    }
    std::istringstream ls(line);
    int idx, parent;
    std::string name;
    double x, y, z;
    if (!(ls >> idx >> name >> parent >> x >> y >> z))
      throw std::runtime_error("skeleton file: bad line: " + line);
    if (idx != static_cast<int>(s.parent.size()))
      throw std::runtime_error("skeleton file: joints out of order at index " +
                               std::to_string(idx));
    s.names.push_back(name);
    s.parent.push_back(parent);
    s.rest_offsets.emplace_back(x, y, z);
  }
  if (!versioned) throw std::runtime_error("skeleton file: missing '# skeleton v1' header");
  s.validate();
  return s;
}

void save_skeleton(const Skeleton& skel, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write skeleton file: " + path);
  out << "# skeleton v1\n";
  out << "# index name parent offset_x offset_y offset_z (meters)\n";
  char buf[160];
  for (int j = 0; j < skel.joint_count(); ++j) {
    std::snprintf(buf, sizeof(buf), "%d %s %d %.9g %.9g %.9g\n", j, skel.names[j].c_str(),
                  skel.parent[j], skel.rest_offsets[j].x(), skel.rest_offsets[j].y(),
                  skel.rest_offsets[j].z());
    out << buf;
  }
}

Mat3 axis_angle_to_matrix(const Vec3& v) {
  if (!v.allFinite()) throw std::invalid_argument("axis_angle_to_matrix: non-finite input");
  const double theta2 = v.squaredNorm();
  Mat3 k;
  k << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  if (theta2 < 1e-8 * 1e-8) {
    // sin(t)/t ~ 1, (1-cos(t))/t^2 ~ 1/2 to second order
    return Mat3::Identity() + k + 0.5 * (k * k);
  }
  const double theta = std::sqrt(theta2);
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / theta2;
  return Mat3::Identity() + a * k + b * (k * k);
}

Vec3 matrix_to_axis_angle(const Mat3& r) {
  Eigen::AngleAxisd aa(r);
  double angle = aa.angle();
  Vec3 axis = aa.axis();
  if (angle < 0) {  // Eigen returns angle in [0, pi] already; keep the guard cheap
    angle = -angle;
    axis = -axis;
  }
  return angle * axis;
}

Vec3 canonicalize(const Vec3& v) {
  const double theta = v.norm();
  if (theta < 1e-12) return Vec3::Zero();
  const Vec3 axis = v / theta;
  // wrap into (-pi, pi], then flip axis for negative angles
  double t = std::fmod(theta, 2.0 * M_PI);
  if (t > M_PI) t -= 2.0 * M_PI;
  return t >= 0 ? Vec3(t * axis) : Vec3(-t * -axis);
}

std::vector<Vec3> forward_kinematics_chain(const std::vector<Vec3>& rotations,
                                           const Skeleton& skel) {
  const int n = skel.joint_count();
  if (static_cast<int>(rotations.size()) != n)
    throw std::invalid_argument("forward_kinematics: pose has " +
                                std::to_string(rotations.size()) + " joints, skeleton " +
                                std::to_string(n));
  std::vector<Vec3> positions(n);
  std::vector<Mat3> global(n);
  global[0] = axis_angle_to_matrix(rotations[0]);
  positions[0] = Vec3::Zero();
  for (int j = 1; j < n; ++j) {
    const int p = skel.parent[j];
    positions[j] = positions[p] + global[p] * skel.rest_offsets[j];
    global[j] = global[p] * axis_angle_to_matrix(rotations[j]);
  }
  return positions;
}

JointPositions forward_kinematics(const PoseParams& pose, const Skeleton& skel) {
  if (skel.joint_count() != kNumJoints)
    throw std::invalid_argument("forward_kinematics: skeleton must have 24 joints");
  const std::vector<Vec3> rot(pose.rotations.begin(), pose.rotations.end());
  const std::vector<Vec3> pos = forward_kinematics_chain(rot, skel);
  JointPositions out;
  std::copy(pos.begin(), pos.end(), out.positions.begin());
  return out;
}

PoseParams align_root(const PoseParams& pred, const PoseParams& gt) {
  PoseParams out = pred;
  out.rotations[0] = gt.rotations[0];
  return out;
}

}  // namespace posegen::geometry
