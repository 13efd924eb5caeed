#pragma once

#include "mocap/types.hpp"

namespace mocap {

using JointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;  // joint_count x 3

// World joint positions of the rigid-bone skeleton. The root sits at
// root_translation; each child adds the parent's cumulative rotation applied
// to its shape-scaled rest offset.
JointMatrix forward_kinematics(const WholeBodyPose& pose, const BodyShape& shape,
                               const Skeleton& skeleton);

// FK with cached cumulative rotations, for gradient propagation.
struct FkResult {
  JointMatrix joints;                 // world positions
  std::vector<Mat3> world_rot;        // cumulative rotation at each joint
  std::vector<Mat3> parent_rot;       // cumulative rotation of the parent frame
};
FkResult forward_kinematics_full(const WholeBodyPose& pose, const BodyShape& shape,
                                 const Skeleton& skeleton);

// Pose-parameter gradient of a scalar loss given dL/d(joint positions).
// Returns a kPoseDim vector (expression entries are zero: expression does not
// move joints).
Eigen::VectorXd fk_backprop(const WholeBodyPose& pose, const BodyShape& shape,
                            const Skeleton& skeleton, const FkResult& fk,
                            const JointMatrix& djoints);

// Full Jacobian d(joint positions)/d(pose parameters): 3*joint_count rows
// (joint-major, xyz), kPoseDim columns. Expression columns are zero.
Eigen::MatrixXd fk_position_jacobian(const WholeBodyPose& pose, const BodyShape& shape,
                                     const Skeleton& skeleton, const FkResult& fk);

}  // namespace mocap
