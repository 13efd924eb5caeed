#include "mocap/camera.hpp"

#include "mocap/errors.hpp"

namespace mocap {

Vec2 project_perspective(const CameraState& camera, const Vec3& point) {
  const Vec3 xc = camera.rotation * point + camera.scale * camera.translation;
  if (xc.z() < kDepthEpsilon) {
    throw DegenerateError("point at or behind the camera plane");
  }
  const Vec3 hom(xc.x() / xc.z(), xc.y() / xc.z(), 1.0);
  return camera.intrinsics * hom;
}

Vec3 backproject(const CameraState& camera, const Vec2& pixel, double inverse_depth) {
  if (!(inverse_depth > 0.0)) {
    throw ValidationError("inverse depth must be positive");
  }
  const double fx = camera.intrinsics(0, 0);
  const double fy = camera.intrinsics(1, 1);
  const double cx = camera.intrinsics(0, 2);
  const double cy = camera.intrinsics(1, 2);
  const Vec3 ray((pixel.x() - cx) / fx, (pixel.y() - cy) / fy, 1.0);
  const Vec3 xc = ray / inverse_depth;
  return camera.rotation.transpose() * (xc - camera.scale * camera.translation);
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Eigen::Matrix<double, 2, 3>& intrinsics,
                                                const Vec3& xc) {
  if (xc.z() < kDepthEpsilon) {
    throw DegenerateError("projection jacobian at degenerate depth");
  }
  const double fx = intrinsics(0, 0);
  const double fy = intrinsics(1, 1);
  const double iz = 1.0 / xc.z();
  Eigen::Matrix<double, 2, 3> j;
  j << fx * iz, 0, -fx * xc.x() * iz * iz, 0, fy * iz, -fy * xc.y() * iz * iz;
  return j;
}

}  // namespace mocap
