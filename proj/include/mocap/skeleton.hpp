#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "mocap/geometry.hpp"

namespace mocap {

inline constexpr int kBodyRotations = 22;
inline constexpr int kHandRotations = 30;  // 15 per hand
inline constexpr int kJawRotations = 1;
inline constexpr int kRotationCount = kBodyRotations + kHandRotations + kJawRotations;  // 53
inline constexpr int kExpressionDim = 50;
inline constexpr int kShapeDim = 10;

enum class JointGroup { Body, Hand, Face, Foot };

// Ten betas mapped linearly to per-bone length scales.
struct BodyShape {
  Eigen::Matrix<double, kShapeDim, 1> beta = Eigen::Matrix<double, kShapeDim, 1>::Zero();
};

// Rigid-bone kinematic tree. Rotating joints index into the 53-rotation pose
// layout (body 0..21, hands 22..51, jaw 52); fingertip markers carry no
// rotation (rot_index < 0).
struct Skeleton {
  std::string id;
  int version = 1;
  std::vector<std::string> names;
  std::vector<int> parent;               // -1 for the root
  std::vector<Vec3> rest_offset;         // bone offset in the parent frame
  std::vector<int> rot_index;            // index into pose rotations, -1 = marker
  std::vector<JointGroup> group;
  Eigen::MatrixXd beta_scale;            // kShapeDim x joint_count

  int joint_count() const { return static_cast<int>(parent.size()); }

  // Per-joint bone scale 1 + beta^T * beta_scale_col; throws if any scale or
  // resulting bone length is non-positive.
  Eigen::VectorXd bone_scales(const BodyShape& shape) const;

  std::vector<int> joints_in_group(JointGroup g) const;

  // Validates tree structure (single root, acyclic, sizes consistent).
  void validate() const;
  int find_joint(const std::string& name) const;  // -1 if absent
};

// The shipped 63-joint template: 22 body + jaw + 2x15 finger joints + 10
// fingertip markers, ~1.7 scene units tall.
Skeleton make_default_skeleton();

// Versioned structured-text (JSON) template file: joint names, parents,
// offsets, groups, rotation map, beta-scale matrix rows.
Skeleton load_skeleton(const std::string& path);
void save_skeleton(const Skeleton& skel, const std::string& path);

}  // namespace mocap
