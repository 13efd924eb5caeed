#pragma once

#include "mocap/types.hpp"

namespace mocap {

inline constexpr double kDepthEpsilon = 1e-6;

// K * dehom(R * X + scale * T); throws DegenerateError when the camera-frame
// depth is below kDepthEpsilon.
Vec2 project_perspective(const CameraState& camera, const Vec3& point);

// Inverse of the camera map for a pixel at the given inverse depth (> 0).
Vec3 backproject(const CameraState& camera, const Vec2& pixel, double inverse_depth);

// d(pixel)/d(camera-frame point) at Xc, 2x3. Throws on degenerate depth.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Eigen::Matrix<double, 2, 3>& intrinsics,
                                                const Vec3& camera_point);

}  // namespace mocap
