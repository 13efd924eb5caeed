#pragma once

#include "mocap/camera.hpp"
#include "mocap/types.hpp"

namespace mocap {

// One multi-view capture instant: the same joints seen from every camera.
struct MultiViewObservation {
  std::vector<KeypointFrame2D> views;  // one per camera
  std::vector<CameraState> cameras;    // initial rig estimate
  int frame_index = 0;

  int view_count() const { return static_cast<int>(views.size()); }
  void validate() const;  // >= 2 views, matching camera count and joint counts
};

// Rigid-bone constraints applied to the triangulated points.
struct BoneGraph {
  std::vector<std::pair<int, int>> edges;
  std::vector<double> target_length;  // scene units, > 0

  void validate(int joint_count) const;
};

struct TriangulationResult {
  Vec3 point = Vec3::Zero();
  double reprojection_rms = 0.0;  // confidence-weighted pixels
};

// Direct-linear-transform triangulation of one joint from >= 2 views with
// confidence above the cutoff. Rows are confidence-weighted. Throws
// ValidationError with fewer than two usable views; DegenerateError when the
// normal system's condition number exceeds 1e8 (near-parallel rays).
TriangulationResult triangulate(const std::vector<Vec2>& pixels,
                                const std::vector<double>& confidence,
                                const std::vector<CameraState>& cameras,
                                double confidence_cutoff = 0.0);

struct BundleWeights {
  double lambda_t = 0.0;  // temporal smoothing on points
  double lambda_b = 0.0;  // bone-length deviation

  void validate() const;
};

struct BundleConfig {
  int iterations = 100;
  double damping = 1e-6;
  double damping_increase = 10.0;
  double damping_decrease = 0.3;
  double tolerance = 1e-14;  // stop once the per-step gain drops below this
};

using PointSequence = std::vector<Eigen::Matrix<double, Eigen::Dynamic, 3>>;

struct BundleResult {
  std::vector<CameraState> cameras;
  PointSequence points;                 // per frame, joint_count x 3
  std::vector<double> objective_trace;  // best objective per iteration
};

// Confidence-weighted squared reprojection error over all frames/views/joints
// plus temporal smoothing and bone-length terms.
double bundle_objective(const std::vector<MultiViewObservation>& observations,
                        const std::vector<CameraState>& cameras, const PointSequence& points,
                        const BoneGraph& bones, const BundleWeights& weights);

// Joint refinement of the camera rig (extrinsics; intrinsics frozen) and the
// 3D keypoint sequence by damped Gauss-Newton. Gauge: the first camera is
// frozen; a nonzero first-camera translation (or the bone term) pins scale.
// Returns a solution whose objective never exceeds the initial one; the trace
// is non-increasing. Throws DivergenceError when the normal equations stay
// unusable (rank-deficient) at maximum damping.
BundleResult bundle_adjust(const std::vector<MultiViewObservation>& observations,
                           const PointSequence& init_points, const BoneGraph& bones,
                           const BundleWeights& weights, const BundleConfig& config = {});

}  // namespace mocap
