#pragma once

#include <random>

#include "mocap/camera.hpp"
#include "mocap/fitting.hpp"
#include "mocap/kinematics.hpp"
#include "mocap/types.hpp"

namespace mocap::testing {

inline Vec3 random_vec(std::mt19937& rng, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  return {d(rng), d(rng), d(rng)};
}

inline WholeBodyPose random_pose(std::mt19937& rng, double rot_scale = 0.3) {
  WholeBodyPose p;
  p.global_orient = random_vec(rng, rot_scale);
  p.root_translation = random_vec(rng, 0.5);
  for (int j = 0; j < kBodyRotations; ++j) p.theta_body.col(j) = random_vec(rng, rot_scale);
  for (int j = 0; j < kHandRotations; ++j) p.theta_hand.col(j) = random_vec(rng, rot_scale);
  p.theta_jaw = random_vec(rng, rot_scale);
  for (int i = 0; i < kExpressionDim; ++i) {
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    p.expression[i] = d(rng);
  }
  return p;
}

// Camera in front of the origin-centered body, looking down +z.
inline CameraState front_camera() {
  CameraState cam = CameraState::pinhole(500, 500, 320, 240);
  cam.translation = Vec3(0, -0.8, 3.0);
  return cam;
}

// Exact targets generated by FK + projection of the given pose sequence.
inline FittingTargets exact_targets(const PoseSequence& poses, const Skeleton& skel,
                                    const BodyShape& shape,
                                    const CameraState& cam = front_camera()) {
  FittingTargets targets;
  const int n = skel.joint_count();
  for (const auto& pose : poses) {
    const JointMatrix joints = forward_kinematics(pose, shape, skel);
    KeypointFrame3D k3;
    k3.points = joints;
    k3.confidence = Eigen::VectorXd::Ones(n);
    KeypointFrame2D k2;
    k2.points.resize(n, 2);
    k2.confidence = Eigen::VectorXd::Ones(n);
    for (int j = 0; j < n; ++j) {
      k2.points.row(j) = project_perspective(cam, joints.row(j).transpose()).transpose();
    }
    targets.k3d.push_back(std::move(k3));
    targets.k2d.push_back(std::move(k2));
    targets.cameras.push_back(cam);
  }
  return targets;
}

// Gaussian perturbation of the rotation/translation channels.
inline WholeBodyPose perturb_pose(const WholeBodyPose& pose, std::mt19937& rng, double sigma) {
  std::normal_distribution<double> d(0.0, sigma);
  Eigen::VectorXd v = pose.flatten();
  for (int i = 0; i < 6 + 3 * kRotationCount; ++i) v[i] += d(rng);
  return WholeBodyPose::unflatten(v);
}

inline double mean_joint_error(const PoseSequence& a, const PoseSequence& b, const Skeleton& skel,
                               const BodyShape& shape) {
  double acc = 0.0;
  int cnt = 0;
  for (size_t t = 0; t < a.size(); ++t) {
    const JointMatrix ja = forward_kinematics(a[t], shape, skel);
    const JointMatrix jb = forward_kinematics(b[t], shape, skel);
    for (int j = 0; j < ja.rows(); ++j) {
      acc += (ja.row(j) - jb.row(j)).norm();
      ++cnt;
    }
  }
  return acc / cnt;
}

}  // namespace mocap::testing
