#pragma once

#include <vector>

#include "mocap/camera.hpp"
#include "mocap/kinematics.hpp"
#include "mocap/types.hpp"

namespace mocap {

// Per-frame smoothed 2D/3D targets and cameras. 2D/3D targets are at skeleton
// joint granularity; zero-confidence rows drop the corresponding residuals.
struct FittingTargets {
  std::vector<KeypointFrame2D> k2d;
  std::vector<KeypointFrame3D> k3d;
  std::vector<CameraState> cameras;

  int length() const { return static_cast<int>(k2d.size()); }
  void validate(int joint_count) const;
};

struct LossWeights {
  double lambda_joint = 1.0;
  double lambda_smooth = 0.5;
  double lambda_pen = 1.0;
  double lambda_phy = 1.0;

  void validate() const;
};

// Joint-sphere collision model: hinge on pairwise sphere overlap.
struct PenetrationSpheres {
  Eigen::VectorXd radii;                          // per joint, > 0
  std::vector<std::pair<int, int>> excluded;      // adjacent pairs, unordered

  bool is_excluded(int a, int b) const;
  void validate(int joint_count) const;
};

// Per rotation-channel (min, max) bounds, radians.
struct JointLimits {
  Eigen::VectorXd min;  // 3 * kRotationCount
  Eigen::VectorXd max;

  void validate() const;
  static JointLimits loose(double bound = 2.8);
};


// L1 terms carry a Huber smoothing delta for differentiability.
inline constexpr double kHuberDelta = 1e-4;

double loss_joint(const PoseSequence& params, const PoseSequence& init,
                  const FittingTargets& targets, const Skeleton& skeleton,
                  const BodyShape& shape);
double loss_smooth(const PoseSequence& params, const std::vector<JointMatrix>& joints);
double loss_penetration(const std::vector<JointMatrix>& joints, const PenetrationSpheres& spheres);
double loss_physical(const PoseSequence& params, const JointLimits& limits);
double total_loss(const PoseSequence& params, const PoseSequence& init,
                  const FittingTargets& targets, const LossWeights& weights,
                  const Skeleton& skeleton, const BodyShape& shape,
                  const PenetrationSpheres& spheres, const JointLimits& limits);

// Analytic gradient of total_loss w.r.t. the flattened parameter sequence
// (kPoseDim per frame, frame-major).
Eigen::VectorXd total_loss_gradient(const PoseSequence& params, const PoseSequence& init,
                                    const FittingTargets& targets, const LossWeights& weights,
                                    const Skeleton& skeleton, const BodyShape& shape,
                                    const PenetrationSpheres& spheres, const JointLimits& limits);

struct OptimizerConfig {
  int iterations = 500;
  double damping = 1e-3;           // initial Levenberg-Marquardt damping
  double damping_increase = 10.0;  // on a rejected step
  double damping_decrease = 0.3;   // on an accepted step
  double tolerance = 1e-10;        // stop once the per-step improvement drops below this
};

struct FitResult {
  PoseSequence params;
  std::vector<double> loss_trace;  // best-so-far total loss per iteration
};

// Damped Gauss-Newton fit of the pose sequence to the targets, with the
// Huber terms handled by iteratively reweighted least squares. The returned
// loss is never above the initial loss; the trace is non-increasing.
FitResult fit_sequence(const PoseSequence& init, const FittingTargets& targets,
                       const LossWeights& weights, const Skeleton& skeleton,
                       const BodyShape& shape, const PenetrationSpheres& spheres,
                       const JointLimits& limits, const OptimizerConfig& config = {});

// Non-overlapping default spheres for the shipped skeleton.
PenetrationSpheres default_spheres(const Skeleton& skeleton);

}  // namespace mocap
