#pragma once

#include "mocap/camera.hpp"
#include "mocap/kinematics.hpp"
#include "mocap/types.hpp"

namespace mocap {

// ---------------------------------------------------------------------------
// Keyframe selection

struct KeyframeSelector {
  double info_threshold = 1.0;       // delta_inf
  std::vector<double> info_score;    // per frame
  std::vector<double> bbox_area;     // per frame, human bounding box
  double frame_area = 1.0;

  void validate() const;
};

// Frame t is selected iff info_score > info_threshold * (1 - bbox_area/frame_area).
std::vector<int> select_keyframes(const KeyframeSelector& selector);

// ---------------------------------------------------------------------------
// Masked sparse bundle adjustment over tracked pixels

// Axis-aligned human mask for one keyframe; empty() masks nothing.
struct MaskRect {
  Vec2 min = Vec2::Zero();
  Vec2 max = Vec2::Zero();

  bool empty() const { return !(max[0] > min[0] && max[1] > min[1]); }
  bool contains(const Vec2& p) const {
    return !empty() && p[0] >= min[0] && p[0] <= max[0] && p[1] >= min[1] && p[1] <= max[1];
  }
};

// World-to-camera rigid pose.
struct SE3 {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
  SE3 inverse() const { return {rotation.transpose(), -(rotation.transpose() * translation)}; }
  SE3 compose(const SE3& rhs) const {  // this after rhs
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }
};

struct BAProblem {
  std::vector<int> keyframes;  // source frame indices (bookkeeping only)
  Eigen::Matrix<double, 2, 3> intrinsics =
      (Eigen::Matrix<double, 2, 3>() << 1, 0, 0, 0, 1, 0).finished();

  // One tracked pixel, seen in its source keyframe and re-observed in a
  // target keyframe at pixel + revision.
  struct Correspondence {
    int source_key = 0;
    int target_key = 0;
    int depth_index = 0;  // into inv_depth
    Vec2 pixel = Vec2::Zero();
    Vec2 revision = Vec2::Zero();  // observed target pixel minus source pixel
    double weight = 1.0;
  };
  std::vector<Correspondence> correspondences;
  Eigen::VectorXd inv_depth;   // per tracked pixel, in its source keyframe
  std::vector<SE3> poses;      // world-to-camera, one per keyframe

  void validate() const;
};

// Zeroes weight, pixel, and revision of every correspondence whose source
// pixel lies inside the mask of its source keyframe. Idempotent. Throws when
// mask count and keyframe count differ.
BAProblem apply_masks(const BAProblem& problem, const std::vector<MaskRect>& masks);

// Weighted flow reprojection error; masked (zero-weight) terms contribute
// exactly zero.
double ba_objective(const BAProblem& problem);

struct BASolveConfig {
  int iterations = 100;
  double damping = 1e-4;
  double damping_increase = 10.0;
  double damping_decrease = 0.3;
  double tolerance = 1e-14;
  // multiplicative box around the initial inverse depths; keeps weakly
  // observed tracks from drifting to infinity (or onto the camera plane)
  double depth_range = 10.0;
};

struct BAResult {
  std::vector<SE3> poses;
  Eigen::VectorXd inv_depth;
  std::vector<double> objective_trace;
};

// Damped Gauss-Newton on the masked objective. Gauge: the first pose stays
// identity and the median inverse depth is renormalized to its initial value
// (an exact gauge transform). Throws ValidationError when no weighted
// correspondences survive.
BAResult solve_masked_ba(const BAProblem& problem, const BASolveConfig& config = {});

// ---------------------------------------------------------------------------
// Global human trajectory

// sigma^2 * ||r||^2 / (sigma^2 + ||r||^2)
double geman_mcclure(const Eigen::VectorXd& residual, double sigma);

inline constexpr double kGemanMcClureSigma = 10.0;  // pixels

// Per-frame global orientation and root translation; everything else frozen.
struct GlobalHumanState {
  std::vector<Vec3> phi;    // global orientation per frame
  std::vector<Vec3> gamma;  // root translation per frame
  PoseSequence theta;       // frozen articulated pose per frame
  BodyShape beta;
  double alpha = 1.0;  // camera translation scale

  int length() const { return static_cast<int>(phi.size()); }
  void validate() const;

  // FK with (phi_t, gamma_t) substituted into the frozen pose.
  WholeBodyPose frame_pose(int t) const;
};

using JointSequence = std::vector<JointMatrix>;

JointSequence state_joints(const GlobalHumanState& state, const Skeleton& skeleton);

// Confidence-weighted Geman-McClure reprojection loss; cameras are per-frame
// extrinsics whose scale is overridden by state.alpha.
double loss_data_global(const GlobalHumanState& state, const std::vector<KeypointFrame2D>& k2d,
                        const std::vector<CameraState>& cameras, const Skeleton& skeleton,
                        double sigma = kGemanMcClureSigma);

// Sum of squared consecutive joint differences.
double loss_smooth_global(const JointSequence& joints);

struct GroundPlane {
  Vec3 normal = Vec3::UnitY();
  double offset = 0.0;  // plane: normal . x = offset

  void validate() const;
  double distance(const Vec3& x) const { return std::abs(normal.dot(x) - offset); }
};

struct ContactModel {
  double height_threshold = 0.08;   // scene units
  double velocity_threshold = 0.02;  // units/frame
  double contact_distance = 0.02;    // delta in the contact hinge
};

// 0/1 contact per frame per foot joint (frames x feet); foot joints are the
// skeleton's Foot group, in index order.
Eigen::MatrixXd detect_foot_contact(const JointSequence& joints, const Skeleton& skeleton,
                                    const GroundPlane& ground, const ContactModel& model = {});

std::vector<int> foot_joint_indices(const Skeleton& skeleton);

// Contact frames penalize stage-II foot velocity; non-contact frames add the
// stage-I velocity (constant w.r.t. stage-II variables).
double loss_skate(const JointSequence& stage1, const JointSequence& stage2,
                  const Eigen::MatrixXd& contacts, const Skeleton& skeleton);

// Hinge on contact-joint distance to the plane beyond delta.
double loss_contact(const JointSequence& joints, const Eigen::MatrixXd& contacts,
                    const Skeleton& skeleton, const GroundPlane& ground, double delta);

struct TrajectoryWeights {
  double lambda_data = 1.0;
  double lambda_smooth = 1.0;
  double lambda_skate = 1.0;
  double lambda_contact = 1.0;
};

struct StageConfig {
  int iterations = 100;
  double damping = 1e-3;
  double damping_increase = 10.0;
  double damping_decrease = 0.3;
  double tolerance = 1e-12;
};

double stage1_objective(const GlobalHumanState& state, const std::vector<KeypointFrame2D>& k2d,
                        const std::vector<CameraState>& cameras, const Skeleton& skeleton,
                        const TrajectoryWeights& weights, double sigma = kGemanMcClureSigma);

// d(stage1_objective)/d(phi_t, gamma_t), 6 per frame (phi first).
Eigen::VectorXd stage1_gradient(const GlobalHumanState& state,
                                const std::vector<KeypointFrame2D>& k2d,
                                const std::vector<CameraState>& cameras, const Skeleton& skeleton,
                                const TrajectoryWeights& weights,
                                double sigma = kGemanMcClureSigma);

struct Stage1Result {
  GlobalHumanState state;
  JointSequence joints;
  std::vector<double> objective_trace;
};

// Refines phi/gamma against the robust reprojection and smoothness terms.
Stage1Result optimize_stage1(const GlobalHumanState& init,
                             const std::vector<KeypointFrame2D>& k2d,
                             const std::vector<CameraState>& cameras, const Skeleton& skeleton,
                             const TrajectoryWeights& weights, const StageConfig& config = {});

struct Stage2Result {
  GlobalHumanState state;
  JointSequence joints;
  GroundPlane ground;
  std::vector<double> objective_trace;
};

double stage2_objective(const GlobalHumanState& state, const std::vector<KeypointFrame2D>& k2d,
                        const std::vector<CameraState>& cameras, const Skeleton& skeleton,
                        const JointSequence& stage1_joints, const Eigen::MatrixXd& contacts,
                        const GroundPlane& ground, const ContactModel& model,
                        const TrajectoryWeights& weights, double sigma = kGemanMcClureSigma);

// Jointly refines phi/gamma and the ground plane with the skate and contact
// terms; stage-I joints feed the constant non-contact skate part.
Stage2Result optimize_stage2(const GlobalHumanState& init,
                             const std::vector<KeypointFrame2D>& k2d,
                             const std::vector<CameraState>& cameras, const Skeleton& skeleton,
                             const JointSequence& stage1_joints, const Eigen::MatrixXd& contacts,
                             const GroundPlane& ground_init, const ContactModel& model,
                             const TrajectoryWeights& weights, const StageConfig& config = {});

}  // namespace mocap
