#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "mocap/geometry.hpp"
#include "mocap/skeleton.hpp"

namespace mocap {

// Whole-body keypoint convention used by the upstream detectors.
inline constexpr int kWholeBodyKeypoints = 133;

// Flattened pose parameter layout (per frame):
//   [0:3)    global_orient
//   [3:6)    root_translation
//   [6:72)   theta_body   22 x 3
//   [72:162) theta_hand   30 x 3 (left 15, right 15)
//   [162:165) theta_jaw
//   [165:215) expression
inline constexpr int kPoseDim = 6 + 3 * kRotationCount + kExpressionDim;  // 215

struct WholeBodyPose {
  Vec3 global_orient = Vec3::Zero();
  Vec3 root_translation = Vec3::Zero();
  Eigen::Matrix<double, 3, kBodyRotations> theta_body =
      Eigen::Matrix<double, 3, kBodyRotations>::Zero();
  Eigen::Matrix<double, 3, kHandRotations> theta_hand =
      Eigen::Matrix<double, 3, kHandRotations>::Zero();
  Vec3 theta_jaw = Vec3::Zero();
  Eigen::Matrix<double, kExpressionDim, 1> expression =
      Eigen::Matrix<double, kExpressionDim, 1>::Zero();

  Eigen::VectorXd flatten() const;
  static WholeBodyPose unflatten(const Eigen::VectorXd& v);

  // Rotation for pose-layout index r in [0, kRotationCount).
  Vec3 rotation(int r) const;

  // Throws ValidationError on NaN/inf components.
  void validate() const;
};

using PoseSequence = std::vector<WholeBodyPose>;

struct KeypointFrame2D {
  Eigen::Matrix<double, Eigen::Dynamic, 2> points;  // pixels
  Eigen::VectorXd confidence;                       // in [0, 1]

  int count() const { return static_cast<int>(points.rows()); }
  void validate(std::optional<int> expected_count = std::nullopt) const;
};

struct KeypointFrame3D {
  Eigen::Matrix<double, Eigen::Dynamic, 3> points;  // scene units
  Eigen::VectorXd confidence;

  int count() const { return static_cast<int>(points.rows()); }
  void validate() const;
};

// Perspective camera: pixel = K23 * dehom(R * X + scale * T).
struct CameraState {
  Eigen::Matrix<double, 2, 3> intrinsics = (Eigen::Matrix<double, 2, 3>() << 1, 0, 0, 0, 1, 0).finished();
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  static CameraState pinhole(double fx, double fy, double cx, double cy);
  void validate() const;  // orthonormality, det +1, scale > 0
};

struct SequenceFrame {
  WholeBodyPose pose;
  std::vector<KeypointFrame2D> views;  // one per camera view
  KeypointFrame3D k3d;
};

struct MotionSequence {
  std::vector<SequenceFrame> frames;
  double fps = 30.0;
  std::string subject_id;

  int length() const { return static_cast<int>(frames.size()); }
  void validate() const;
};

enum class BodyPart { Body, Hand, Face };
enum class StdRepresentation { Parameters, Joints };

// Mean over channels of the per-channel population standard deviation across
// time. Joint channels are root-/wrist-/neck-relative for body/hand/face.
double compute_temporal_std(const MotionSequence& seq, const Skeleton& skeleton,
                            const BodyShape& shape, BodyPart part, StdRepresentation repr);

}  // namespace mocap
