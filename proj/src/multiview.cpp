#include "mocap/multiview.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "mocap/errors.hpp"

namespace mocap {

void MultiViewObservation::validate() const {
  if (views.size() < 2) throw ValidationError("multi-view observation needs >= 2 views");
  if (views.size() != cameras.size()) {
    throw ValidationError("view/camera count mismatch");
  }
  const int joints = views[0].count();
  for (const auto& v : views) {
    v.validate(joints);
  }
  for (const auto& c : cameras) c.validate();
}

void BoneGraph::validate(int joint_count) const {
  if (edges.size() != target_length.size()) {
    throw ValidationError("bone graph edge/length count mismatch");
  }
  for (size_t e = 0; e < edges.size(); ++e) {
    const auto& [i, j] = edges[e];
    if (i < 0 || j < 0 || i >= joint_count || j >= joint_count || i == j) {
      throw ValidationError("bone graph edge out of range");
    }
    if (!(target_length[e] > 0.0)) throw ValidationError("bone target length must be positive");
  }
}

void BundleWeights::validate() const {
  if (lambda_t < 0 || lambda_b < 0) throw ValidationError("bundle weights must be non-negative");
}

TriangulationResult triangulate(const std::vector<Vec2>& pixels,
                                const std::vector<double>& confidence,
                                const std::vector<CameraState>& cameras,
                                double confidence_cutoff) {
  if (pixels.size() != confidence.size() || pixels.size() != cameras.size()) {
    throw ValidationError("triangulate: input size mismatch");
  }
  std::vector<int> usable;
  for (size_t v = 0; v < pixels.size(); ++v) {
    if (confidence[v] > confidence_cutoff) usable.push_back(static_cast<int>(v));
  }
  if (usable.size() < 2) throw ValidationError("triangulate: fewer than 2 usable views");

  // Each view contributes two linear rows: with h = [xc/zc, yc/zc, 1],
  // u = K.row(0) h  <=>  (k00 R0 + k01 R1 + (k02 - u) R2) X = -(same) s T.
  Eigen::MatrixXd a(2 * usable.size(), 3);
  Eigen::VectorXd b(2 * usable.size());
  int row = 0;
  for (const int v : usable) {
    const auto& cam = cameras[v];
    cam.validate();
    const double w = std::sqrt(confidence[v]);
    for (int c = 0; c < 2; ++c) {
      Vec3 coeff = cam.intrinsics(c, 0) * cam.rotation.row(0).transpose() +
                   cam.intrinsics(c, 1) * cam.rotation.row(1).transpose() +
                   (cam.intrinsics(c, 2) - pixels[v][c]) * cam.rotation.row(2).transpose();
      Vec3 tcoeff = cam.intrinsics(c, 0) * Vec3::Unit(0) + cam.intrinsics(c, 1) * Vec3::Unit(1) +
                    (cam.intrinsics(c, 2) - pixels[v][c]) * Vec3::Unit(2);
      a.row(row) = w * coeff.transpose();
      b[row] = -w * cam.scale * tcoeff.dot(cam.translation);
      ++row;
    }
  }

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (smin <= 0.0 || smax / smin > 1e8) {
    throw DegenerateError("triangulate: near-parallel rays (condition number > 1e8)");
  }

  TriangulationResult out;
  out.point = svd.solve(b);

  double acc = 0.0, wsum = 0.0;
  for (const int v : usable) {
    const Vec2 proj = project_perspective(cameras[v], out.point);
    acc += confidence[v] * (proj - pixels[v]).squaredNorm();
    wsum += confidence[v];
  }
  out.reprojection_rms = std::sqrt(acc / std::max(wsum, 1e-300));
  return out;
}

double bundle_objective(const std::vector<MultiViewObservation>& observations,
                        const std::vector<CameraState>& cameras, const PointSequence& points,
                        const BoneGraph& bones, const BundleWeights& weights) {
  weights.validate();
  if (observations.size() != points.size()) {
    throw ValidationError("bundle objective: frame count mismatch");
  }
  double obj = 0.0;
  for (size_t t = 0; t < observations.size(); ++t) {
    const auto& obs = observations[t];
    const int joints = static_cast<int>(points[t].rows());
    for (int v = 0; v < obs.view_count(); ++v) {
      for (int j = 0; j < joints; ++j) {
        const double w = obs.views[v].confidence[j];
        if (w <= 0.0) continue;
        const Vec2 proj = project_perspective(cameras[v], points[t].row(j).transpose());
        obj += w * (proj - obs.views[v].points.row(j).transpose()).squaredNorm();
      }
    }
    for (size_t e = 0; e < bones.edges.size(); ++e) {
      const auto& [i, j] = bones.edges[e];
      const double len = (points[t].row(i) - points[t].row(j)).norm();
      obj += weights.lambda_b * (len - bones.target_length[e]) * (len - bones.target_length[e]);
    }
    if (t > 0) obj += weights.lambda_t * (points[t] - points[t - 1]).squaredNorm();
  }
  return obj;
}

namespace {

// Rotation applied as R(omega) * R0 so the Jacobian at omega = 0 is exact and
// cheap; omega is re-absorbed into R0 after every accepted step.
struct CameraBlock {
  CameraState base;
  bool frozen = false;
};

}  // namespace

BundleResult bundle_adjust(const std::vector<MultiViewObservation>& observations,
                           const PointSequence& init_points, const BoneGraph& bones,
                           const BundleWeights& weights, const BundleConfig& config) {
  if (observations.empty()) throw ValidationError("bundle_adjust: no observations");
  if (observations.size() != init_points.size()) {
    throw ValidationError("bundle_adjust: frame count mismatch");
  }
  weights.validate();
  const int cam_count = observations[0].view_count();
  for (const auto& obs : observations) {
    obs.validate();
    if (obs.view_count() != cam_count) {
      throw ValidationError("bundle_adjust: inconsistent view counts");
    }
  }
  const int t_count = static_cast<int>(observations.size());
  const int joints = static_cast<int>(init_points[0].rows());
  bones.validate(joints);
  for (const auto& p : init_points) {
    if (p.rows() != joints) throw ValidationError("bundle_adjust: inconsistent joint counts");
    if (!p.allFinite()) throw ValidationError("bundle_adjust: non-finite init points");
  }

  BundleResult result;
  result.cameras = observations[0].cameras;
  result.points = init_points;

  // parameter layout: 6 per movable camera (omega, translation), then 3 per
  // point, frame-major
  const int cam_params = 6 * (cam_count - 1);
  const int n = cam_params + 3 * t_count * joints;
  auto cam_off = [&](int v) { return 6 * (v - 1); };
  auto pt_off = [&](int t, int j) { return cam_params + 3 * (t * joints + j); };

  double best = bundle_objective(observations, result.cameras, result.points, bones, weights);
  if (!std::isfinite(best)) throw ValidationError("bundle_adjust: non-finite initial objective");
  result.objective_trace.reserve(config.iterations);

  double damping = config.damping;
  bool ever_accepted = false;
  for (int it = 0; it < config.iterations; ++it) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);

    auto add_residual = [&](const Eigen::VectorXd& jrow, const std::vector<int>& cols, double r,
                            double w) {
      for (size_t a = 0; a < cols.size(); ++a) {
        g[cols[a]] -= w * r * jrow[a];
        for (size_t b = 0; b < cols.size(); ++b) h(cols[a], cols[b]) += w * jrow[a] * jrow[b];
      }
    };

    for (int t = 0; t < t_count; ++t) {
      const auto& obs = observations[t];
      for (int v = 0; v < cam_count; ++v) {
        const auto& cam = result.cameras[v];
        for (int j = 0; j < joints; ++j) {
          const double w = obs.views[v].confidence[j];
          if (w <= 0.0) continue;
          const Vec3 x = result.points[t].row(j).transpose();
          const Vec3 xc = cam.rotation * x + cam.scale * cam.translation;
          const Vec2 proj = project_perspective(cam, x);
          const Eigen::Matrix<double, 2, 3> jp = projection_jacobian(cam.intrinsics, xc);
          const Eigen::Matrix<double, 2, 3> jpt = jp * cam.rotation;

          std::vector<int> cols = {pt_off(t, j), pt_off(t, j) + 1, pt_off(t, j) + 2};
          const int ncols = v == 0 ? 3 : 9;
          Eigen::MatrixXd rows(2, ncols);
          rows.leftCols<3>() = jpt;
          if (v > 0) {
            // omega perturbation: d(R(omega) R0 x)/d omega at 0 = -skew(R0 x)
            const Eigen::Matrix<double, 2, 3> jrot = jp * (-skew(cam.rotation * x));
            const Eigen::Matrix<double, 2, 3> jtr = jp * cam.scale;
            rows.middleCols<3>(3) = jrot;
            rows.rightCols<3>() = jtr;
            for (int k = 0; k < 6; ++k) cols.push_back(cam_off(v) + k);
          }
          for (int c = 0; c < 2; ++c) {
            const double r = proj[c] - obs.views[v].points(j, c);
            add_residual(rows.row(c).transpose(), cols, r, w);
          }
        }
      }

      if (weights.lambda_b > 0) {
        for (size_t e = 0; e < bones.edges.size(); ++e) {
          const auto& [i, j] = bones.edges[e];
          const Vec3 diff =
              (result.points[t].row(i) - result.points[t].row(j)).transpose();
          const double d = diff.norm();
          if (d < 1e-12) continue;
          const Vec3 dir = diff / d;
          Eigen::VectorXd jrow(6);
          jrow << dir, -dir;
          std::vector<int> cols = {pt_off(t, i),     pt_off(t, i) + 1, pt_off(t, i) + 2,
                                   pt_off(t, j),     pt_off(t, j) + 1, pt_off(t, j) + 2};
          add_residual(jrow, cols, d - bones.target_length[e], weights.lambda_b);
        }
      }

      if (weights.lambda_t > 0 && t > 0) {
        for (int j = 0; j < joints; ++j) {
          for (int c = 0; c < 3; ++c) {
            Eigen::VectorXd jrow(2);
            jrow << 1.0, -1.0;
            std::vector<int> cols = {pt_off(t, j) + c, pt_off(t - 1, j) + c};
            add_residual(jrow, cols, result.points[t](j, c) - result.points[t - 1](j, c),
                         weights.lambda_t);
          }
        }
      }
    }

    if (g.norm() < 1e-14) {  // already at a stationary point (e.g. exact init)
      result.objective_trace.push_back(best);
      break;
    }

    Eigen::MatrixXd damped = h;
    damped.diagonal().array() += damping * (1.0 + h.diagonal().array().abs());
    const Eigen::VectorXd dx = Eigen::LDLT<Eigen::MatrixXd>(damped).solve(g);

    bool accepted = false;
    if (dx.allFinite()) {
      std::vector<CameraState> trial_cams = result.cameras;
      for (int v = 1; v < cam_count; ++v) {
        const Vec3 omega = dx.segment<3>(cam_off(v));
        trial_cams[v].rotation = axis_angle_to_matrix(omega) * result.cameras[v].rotation;
        trial_cams[v].translation += dx.segment<3>(cam_off(v) + 3);
      }
      PointSequence trial_pts = result.points;
      for (int t = 0; t < t_count; ++t) {
        for (int j = 0; j < joints; ++j) {
          trial_pts[t].row(j) += dx.segment<3>(pt_off(t, j)).transpose();
        }
      }
      double obj;
      try {
        obj = bundle_objective(observations, trial_cams, trial_pts, bones, weights);
      } catch (const DegenerateError&) {
        obj = std::numeric_limits<double>::infinity();  // point moved behind a camera
      }
      if (std::isfinite(obj) && obj < best) {
        const double gain = best - obj;
        result.cameras = std::move(trial_cams);
        result.points = std::move(trial_pts);
        best = obj;
        damping = std::max(damping * config.damping_decrease, 1e-15);
        accepted = ever_accepted = true;
        result.objective_trace.push_back(best);
        if (gain < config.tolerance) break;
      }
    }
    if (!accepted) {
      damping *= config.damping_increase;
      result.objective_trace.push_back(best);
      if (damping > 1e12) {
        if (!ever_accepted) {
          throw DivergenceError("bundle_adjust: normal equations unusable at maximum damping");
        }
        break;
      }
    }
  }
  return result;
}

}  // namespace mocap
