#include "mocap/geometry.hpp"

#include <cmath>

namespace mocap {

Mat3 axis_angle_to_matrix(const Vec3& aa) {
  const double angle = aa.norm();
  if (angle < 1e-12) {
    return Mat3::Identity() + skew(aa);
  }
  return Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix();
}

Mat3 axis_angle_jacobian(const Vec3& aa, int m) {
  const double n2 = aa.squaredNorm();
  Vec3 e = Vec3::Zero();
  e[m] = 1.0;
  if (n2 < 1e-16) {
    return skew(e);
  }
  const Mat3 r = axis_angle_to_matrix(aa);
  const Vec3 w = aa.cross((Mat3::Identity() - r) * e);
  return ((aa[m] * skew(aa) + skew(w)) / n2) * r;
}

Vec3 matrix_to_axis_angle(const Mat3& r) {
  Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

double rotation_distance(const Mat3& a, const Mat3& b) {
  const double c = ((a.transpose() * b).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace mocap
