#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace mocap {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// Rodrigues: axis-angle vector -> rotation matrix.
Mat3 axis_angle_to_matrix(const Vec3& aa);

// Derivative of axis_angle_to_matrix w.r.t. component m of the axis-angle
// vector (Gallego & Yezzi closed form, with the small-angle limit).
Mat3 axis_angle_jacobian(const Vec3& aa, int m);

// Matrix logarithm onto the axis-angle chart (angle in [0, pi]).
Vec3 matrix_to_axis_angle(const Mat3& r);

// Angle of the relative rotation between two rotation matrices.
double rotation_distance(const Mat3& a, const Mat3& b);

}  // namespace mocap
