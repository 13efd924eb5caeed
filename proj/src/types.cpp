#include "mocap/types.hpp"

#include <cmath>

#include "mocap/errors.hpp"
#include "mocap/kinematics.hpp"

namespace mocap {

Eigen::VectorXd WholeBodyPose::flatten() const {
  Eigen::VectorXd v(kPoseDim);
  v.segment<3>(0) = global_orient;
  v.segment<3>(3) = root_translation;
  v.segment(6, 3 * kBodyRotations) = Eigen::Map<const Eigen::VectorXd>(theta_body.data(), 3 * kBodyRotations);
  v.segment(72, 3 * kHandRotations) = Eigen::Map<const Eigen::VectorXd>(theta_hand.data(), 3 * kHandRotations);
  v.segment<3>(162) = theta_jaw;
  v.segment(165, kExpressionDim) = expression;
  return v;
}

WholeBodyPose WholeBodyPose::unflatten(const Eigen::VectorXd& v) {
  if (v.size() != kPoseDim) throw ValidationError("pose vector has wrong dimension");
  WholeBodyPose p;
  p.global_orient = v.segment<3>(0);
  p.root_translation = v.segment<3>(3);
  Eigen::Map<Eigen::VectorXd>(p.theta_body.data(), 3 * kBodyRotations) = v.segment(6, 3 * kBodyRotations);
  Eigen::Map<Eigen::VectorXd>(p.theta_hand.data(), 3 * kHandRotations) = v.segment(72, 3 * kHandRotations);
  p.theta_jaw = v.segment<3>(162);
  p.expression = v.segment(165, kExpressionDim);
  return p;
}

Vec3 WholeBodyPose::rotation(int r) const {
  if (r < kBodyRotations) return theta_body.col(r);
  if (r < kBodyRotations + kHandRotations) return theta_hand.col(r - kBodyRotations);
  return theta_jaw;
}

void WholeBodyPose::validate() const {
  if (!flatten().allFinite()) throw ValidationError("pose contains non-finite components");
}

void KeypointFrame2D::validate(std::optional<int> expected_count) const {
  if (confidence.size() != points.rows()) {
    throw ValidationError("2D keypoint confidence count mismatch");
  }
  if (expected_count && count() != *expected_count) {
    throw ValidationError("unexpected 2D keypoint count");
  }
  if (!points.allFinite()) throw ValidationError("2D keypoints contain non-finite values");
  if ((confidence.array() < 0.0).any() || (confidence.array() > 1.0).any()) {
    throw ValidationError("2D keypoint confidence outside [0,1]");
  }
}

void KeypointFrame3D::validate() const {
  if (confidence.size() != points.rows()) {
    throw ValidationError("3D keypoint confidence count mismatch");
  }
  if (!points.allFinite()) throw ValidationError("3D keypoints contain non-finite values");
}

CameraState CameraState::pinhole(double fx, double fy, double cx, double cy) {
  CameraState c;
  c.intrinsics << fx, 0, cx, 0, fy, cy;
  return c;
}

void CameraState::validate() const {
  if ((rotation * rotation.transpose() - Mat3::Identity()).norm() > 1e-9 ||
      std::abs(rotation.determinant() - 1.0) > 1e-9) {
    throw ValidationError("camera rotation is not a proper rotation");
  }
  if (!(scale > 0.0)) throw ValidationError("camera scale must be positive");
}

void MotionSequence::validate() const {
  if (frames.empty()) throw ValidationError("motion sequence is empty");
  if (!(fps > 0.0)) throw ValidationError("fps must be positive");
}

namespace {

// Collects the channel matrix (channels x time) for one part/representation.
Eigen::MatrixXd part_channels(const MotionSequence& seq, const Skeleton& skeleton,
                              const BodyShape& shape, BodyPart part, StdRepresentation repr) {
  const int t_count = seq.length();
  if (repr == StdRepresentation::Parameters) {
    int dim = 0;
    switch (part) {
      case BodyPart::Body: dim = 3 * kBodyRotations; break;
      case BodyPart::Hand: dim = 3 * kHandRotations; break;
      case BodyPart::Face: dim = 3 + kExpressionDim; break;
    }
    Eigen::MatrixXd m(dim, t_count);
    for (int t = 0; t < t_count; ++t) {
      const auto& p = seq.frames[t].pose;
      switch (part) {
        case BodyPart::Body:
          m.col(t) = Eigen::Map<const Eigen::VectorXd>(p.theta_body.data(), dim);
          break;
        case BodyPart::Hand:
          m.col(t) = Eigen::Map<const Eigen::VectorXd>(p.theta_hand.data(), dim);
          break;
        case BodyPart::Face:
          m.col(t).head<3>() = p.theta_jaw;
          m.col(t).tail(kExpressionDim) = p.expression;
          break;
      }
    }
    return m;
  }

  JointGroup g = JointGroup::Body;
  switch (part) {
    case BodyPart::Body: g = JointGroup::Body; break;
    case BodyPart::Hand: g = JointGroup::Hand; break;
    case BodyPart::Face: g = JointGroup::Face; break;
  }
  std::vector<int> joints = skeleton.joints_in_group(g);
  if (part == BodyPart::Body) {
    // feet belong to the body point set
    for (int j : skeleton.joints_in_group(JointGroup::Foot)) joints.push_back(j);
  }
  const int root = skeleton.find_joint("pelvis");
  const int lwrist = skeleton.find_joint("left_wrist");
  const int rwrist = skeleton.find_joint("right_wrist");
  const int neck = skeleton.find_joint("neck");

  Eigen::MatrixXd m(3 * joints.size(), t_count);
  for (int t = 0; t < t_count; ++t) {
    const auto world = forward_kinematics(seq.frames[t].pose, shape, skeleton);
    for (size_t k = 0; k < joints.size(); ++k) {
      const int j = joints[k];
      Vec3 ref = Vec3::Zero();
      switch (part) {
        case BodyPart::Body: ref = world.row(root); break;
        case BodyPart::Hand: {
          const bool left = skeleton.names[j].rfind("left_", 0) == 0;
          ref = world.row(left ? lwrist : rwrist);
          break;
        }
        case BodyPart::Face: ref = world.row(neck); break;
      }
      m.block<3, 1>(3 * k, t) = world.row(j).transpose() - ref;
    }
  }
  return m;
}

}  // namespace

double compute_temporal_std(const MotionSequence& seq, const Skeleton& skeleton,
                            const BodyShape& shape, BodyPart part, StdRepresentation repr) {
  seq.validate();
  if (seq.length() < 2) {
    throw ValidationError("temporal std undefined for single-frame sequence");
  }
  const Eigen::MatrixXd m = part_channels(seq, skeleton, shape, part, repr);
  const Eigen::VectorXd mean = m.rowwise().mean();
  const Eigen::VectorXd var =
      (m.colwise() - mean).array().square().matrix().rowwise().mean();
  return var.array().sqrt().mean();
}

}  // namespace mocap
