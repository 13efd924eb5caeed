#include "mocap/kinematics.hpp"

#include "mocap/errors.hpp"

namespace mocap {

namespace {

// Offset of pose-layout rotation r in the flattened parameter vector.
int rotation_offset(int r) {
  if (r < kBodyRotations) return 6 + 3 * r;
  if (r < kBodyRotations + kHandRotations) return 72 + 3 * (r - kBodyRotations);
  return 162;
}

}  // namespace

FkResult forward_kinematics_full(const WholeBodyPose& pose, const BodyShape& shape,
                                 const Skeleton& skeleton) {
  skeleton.validate();
  pose.validate();
  const int n = skeleton.joint_count();
  const Eigen::VectorXd scales = skeleton.bone_scales(shape);
  const Mat3 global = axis_angle_to_matrix(pose.global_orient);

  FkResult out;
  out.joints.resize(n, 3);
  out.world_rot.resize(n);
  out.parent_rot.resize(n);

  for (int j = 0; j < n; ++j) {
    const int par = skeleton.parent[j];
    const Mat3& wpar = par < 0 ? global : out.world_rot[par];
    const Vec3 ppar = par < 0 ? pose.root_translation : out.joints.row(par).transpose();
    out.parent_rot[j] = wpar;
    out.joints.row(j) = (ppar + wpar * (scales[j] * skeleton.rest_offset[j])).transpose();
    if (skeleton.rot_index[j] >= 0) {
      out.world_rot[j] = wpar * axis_angle_to_matrix(pose.rotation(skeleton.rot_index[j]));
    } else {
      out.world_rot[j] = wpar;
    }
  }
  return out;
}

JointMatrix forward_kinematics(const WholeBodyPose& pose, const BodyShape& shape,
                               const Skeleton& skeleton) {
  return forward_kinematics_full(pose, shape, skeleton).joints;
}

Eigen::VectorXd fk_backprop(const WholeBodyPose& pose, const BodyShape& shape,
                            const Skeleton& skeleton, const FkResult& fk,
                            const JointMatrix& djoints) {
  (void)shape;
  const int n = skeleton.joint_count();
  if (djoints.rows() != n) throw ValidationError("fk_backprop: gradient row count mismatch");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(kPoseDim);

  // subtree sums of g_j and p_j g_j^T (joints are topologically ordered)
  std::vector<Vec3> gsum(n);
  std::vector<Mat3> pgsum(n);
  for (int j = 0; j < n; ++j) {
    gsum[j] = djoints.row(j).transpose();
    pgsum[j] = fk.joints.row(j).transpose() * djoints.row(j);
  }
  for (int j = n - 1; j > 0; --j) {
    const int par = skeleton.parent[j];
    gsum[par] += gsum[j];
    pgsum[par] += pgsum[j];
  }

  // root translation moves every joint rigidly
  grad.segment<3>(3) = gsum[0];

  // global orientation: all joints rotate about the root
  const Mat3 global = axis_angle_to_matrix(pose.global_orient);
  const Mat3 c_root = pgsum[0] - pose.root_translation * gsum[0].transpose();
  for (int m = 0; m < 3; ++m) {
    const Mat3 b = axis_angle_jacobian(pose.global_orient, m) * global.transpose();
    grad[m] = (b * c_root).trace();
  }

  // per-joint rotations: affect strict descendants only
  for (int k = 0; k < n; ++k) {
    const int r = skeleton.rot_index[k];
    if (r < 0) continue;
    const Vec3 omega = pose.rotation(r);
    const Mat3 rk = axis_angle_to_matrix(omega);
    const Mat3& wpar = fk.parent_rot[k];
    const Vec3 pk = fk.joints.row(k).transpose();
    const Mat3 c = pgsum[k] - pk * gsum[k].transpose();
    const int off = rotation_offset(r);
    for (int m = 0; m < 3; ++m) {
      const Mat3 b = wpar * axis_angle_jacobian(omega, m) * rk.transpose() * wpar.transpose();
      grad[off + m] += (b * c).trace();
    }
  }
  return grad;
}

Eigen::MatrixXd fk_position_jacobian(const WholeBodyPose& pose, const BodyShape& shape,
                                     const Skeleton& skeleton, const FkResult& fk) {
  (void)shape;
  const int n = skeleton.joint_count();
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(3 * n, kPoseDim);

  // root translation moves every joint rigidly
  for (int d = 0; d < n; ++d) jac.block<3, 3>(3 * d, 3).setIdentity();

  // global orientation: dp_d = B_m (p_d - trans)
  const Mat3 global = axis_angle_to_matrix(pose.global_orient);
  for (int m = 0; m < 3; ++m) {
    const Mat3 b = axis_angle_jacobian(pose.global_orient, m) * global.transpose();
    for (int d = 0; d < n; ++d) {
      const Vec3 rel = fk.joints.row(d).transpose() - pose.root_translation;
      jac.block<3, 1>(3 * d, m) = b * rel;
    }
  }

  // per-joint rotations move strict descendants: dp_d = B_m (p_d - p_k)
  std::vector<std::vector<int>> children(n);
  for (int j = 1; j < n; ++j) children[skeleton.parent[j]].push_back(j);

  std::vector<int> stack;
  for (int k = 0; k < n; ++k) {
    const int r = skeleton.rot_index[k];
    if (r < 0) continue;
    const Vec3 omega = pose.rotation(r);
    const Mat3 rk = axis_angle_to_matrix(omega);
    const Mat3& wpar = fk.parent_rot[k];
    const Vec3 pk = fk.joints.row(k).transpose();
    const int off = rotation_offset(r);
    Mat3 b[3];
    for (int m = 0; m < 3; ++m) {
      b[m] = wpar * axis_angle_jacobian(omega, m) * rk.transpose() * wpar.transpose();
    }
    stack.assign(children[k].begin(), children[k].end());
    while (!stack.empty()) {
      const int d = stack.back();
      stack.pop_back();
      const Vec3 rel = fk.joints.row(d).transpose() - pk;
      for (int m = 0; m < 3; ++m) jac.block<3, 1>(3 * d, off + m) = b[m] * rel;
      stack.insert(stack.end(), children[d].begin(), children[d].end());
    }
  }
  return jac;
}

}  // namespace mocap
