#include "mocap/fitting.hpp"

#include <algorithm>
#include <cmath>

#include "mocap/errors.hpp"

namespace mocap {

namespace {

double huber(double r) {
  const double a = std::abs(r);
  return a <= kHuberDelta ? r * r / (2.0 * kHuberDelta) : a - kHuberDelta / 2.0;
}

double huber_grad(double r) { return std::clamp(r / kHuberDelta, -1.0, 1.0); }

double huber_sum(const Eigen::VectorXd& r) {
  double s = 0.0;
  for (int i = 0; i < r.size(); ++i) s += huber(r[i]);
  return s;
}

Eigen::VectorXd huber_grad_vec(const Eigen::VectorXd& r) {
  Eigen::VectorXd g(r.size());
  for (int i = 0; i < r.size(); ++i) g[i] = huber_grad(r[i]);
  return g;
}

}  // namespace

void FittingTargets::validate(int joint_count) const {
  if (k2d.size() != k3d.size() || k2d.size() != cameras.size()) {
    throw ValidationError("fitting target sequences must have equal length");
  }
  for (size_t t = 0; t < k2d.size(); ++t) {
    k2d[t].validate(joint_count);
    k3d[t].validate();
    if (k3d[t].count() != joint_count) throw ValidationError("3D target joint count mismatch");
    cameras[t].validate();
  }
}

void LossWeights::validate() const {
  if (lambda_joint < 0 || lambda_smooth < 0 || lambda_pen < 0 || lambda_phy < 0) {
    throw ValidationError("loss weights must be non-negative");
  }
}

bool PenetrationSpheres::is_excluded(int a, int b) const {
  for (const auto& [x, y] : excluded) {
    if ((x == a && y == b) || (x == b && y == a)) return true;
  }
  return false;
}

void PenetrationSpheres::validate(int joint_count) const {
  if (radii.size() != joint_count) throw ValidationError("sphere radii must cover all joints");
  if ((radii.array() <= 0.0).any()) throw ValidationError("sphere radii must be positive");
}

void JointLimits::validate() const {
  if (min.size() != 3 * kRotationCount || max.size() != 3 * kRotationCount) {
    throw ValidationError("joint limits must cover all rotation channels");
  }
  if ((min.array() >= max.array()).any()) throw ValidationError("joint limit min must be < max");
}

JointLimits JointLimits::loose(double bound) {
  JointLimits l;
  l.min = Eigen::VectorXd::Constant(3 * kRotationCount, -bound);
  l.max = Eigen::VectorXd::Constant(3 * kRotationCount, bound);
  return l;
}

PenetrationSpheres default_spheres(const Skeleton& skeleton) {
  PenetrationSpheres s;
  const int n = skeleton.joint_count();
  s.radii.resize(n);
  for (int j = 0; j < n; ++j) {
    switch (skeleton.group[j]) {
      case JointGroup::Hand: s.radii[j] = 0.006; break;
      case JointGroup::Face: s.radii[j] = 0.02; break;
      default: s.radii[j] = 0.04; break;
    }
  }
  // exclude pairs within two tree hops: parent-child, siblings, grandparent
  for (int j = 0; j < n; ++j) {
    const int p = skeleton.parent[j];
    if (p < 0) continue;
    s.excluded.emplace_back(j, p);
    if (skeleton.parent[p] >= 0) s.excluded.emplace_back(j, skeleton.parent[p]);
    for (int k = j + 1; k < n; ++k) {
      if (skeleton.parent[k] == p) s.excluded.emplace_back(j, k);
    }
  }
  return s;
}

double loss_joint(const PoseSequence& params, const PoseSequence& init,
                  const FittingTargets& targets, const Skeleton& skeleton,
                  const BodyShape& shape) {
  const int n = skeleton.joint_count();
  if (params.size() != init.size() || static_cast<int>(params.size()) != targets.length()) {
    throw ValidationError("loss_joint: sequence length mismatch");
  }
  targets.validate(n);
  double loss = 0.0;
  for (size_t t = 0; t < params.size(); ++t) {
    const JointMatrix joints = forward_kinematics(params[t], shape, skeleton);
    for (int j = 0; j < n; ++j) {
      if (targets.k3d[t].confidence[j] > 0.0) {
        for (int c = 0; c < 3; ++c) loss += huber(joints(j, c) - targets.k3d[t].points(j, c));
      }
      if (targets.k2d[t].confidence[j] > 0.0) {
        const Vec2 proj = project_perspective(targets.cameras[t], joints.row(j).transpose());
        for (int c = 0; c < 2; ++c) loss += huber(proj[c] - targets.k2d[t].points(j, c));
      }
    }
    loss += huber_sum(params[t].flatten() - init[t].flatten());
  }
  return loss;
}

double loss_smooth(const PoseSequence& params, const std::vector<JointMatrix>& joints) {
  if (params.size() != joints.size()) throw ValidationError("loss_smooth: length mismatch");
  double loss = 0.0;
  for (size_t t = 1; t < params.size(); ++t) {
    loss += huber_sum(params[t].flatten() - params[t - 1].flatten());
    const Eigen::MatrixXd d = joints[t] - joints[t - 1];
    for (int i = 0; i < d.rows(); ++i) {
      for (int c = 0; c < 3; ++c) loss += huber(d(i, c));
    }
  }
  return loss;
}

double loss_penetration(const std::vector<JointMatrix>& joints, const PenetrationSpheres& spheres) {
  double loss = 0.0;
  for (const auto& frame : joints) {
    const int n = static_cast<int>(frame.rows());
    spheres.validate(n);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (spheres.is_excluded(i, j)) continue;
        const double d = (frame.row(i) - frame.row(j)).norm();
        const double overlap = std::max(0.0, spheres.radii[i] + spheres.radii[j] - d);
        loss += overlap * overlap;
      }
    }
  }
  return loss;
}

double loss_physical(const PoseSequence& params, const JointLimits& limits) {
  limits.validate();
  double loss = 0.0;
  for (const auto& p : params) {
    const Eigen::VectorXd v = p.flatten();
    for (int r = 0; r < kRotationCount; ++r) {
      const int off = r < kBodyRotations          ? 6 + 3 * r
                      : r < kBodyRotations + kHandRotations ? 72 + 3 * (r - kBodyRotations)
                                                            : 162;
      for (int c = 0; c < 3; ++c) {
        const double theta = v[off + c];
        const int ch = 3 * r + c;
        const double over = std::max(0.0, theta - limits.max[ch]);
        const double under = std::max(0.0, limits.min[ch] - theta);
        loss += over * over + under * under;
      }
    }
  }
  return loss;
}

double total_loss(const PoseSequence& params, const PoseSequence& init,
                  const FittingTargets& targets, const LossWeights& weights,
                  const Skeleton& skeleton, const BodyShape& shape,
                  const PenetrationSpheres& spheres, const JointLimits& limits) {
  weights.validate();
  std::vector<JointMatrix> joints;
  joints.reserve(params.size());
  for (const auto& p : params) joints.push_back(forward_kinematics(p, shape, skeleton));

  double loss = 0.0;
  if (weights.lambda_joint > 0) {
    loss += weights.lambda_joint * loss_joint(params, init, targets, skeleton, shape);
  }
  if (weights.lambda_smooth > 0) loss += weights.lambda_smooth * loss_smooth(params, joints);
  if (weights.lambda_pen > 0) loss += weights.lambda_pen * loss_penetration(joints, spheres);
  if (weights.lambda_phy > 0) loss += weights.lambda_phy * loss_physical(params, limits);
  return loss;
}

Eigen::VectorXd total_loss_gradient(const PoseSequence& params, const PoseSequence& init,
                                    const FittingTargets& targets, const LossWeights& weights,
                                    const Skeleton& skeleton, const BodyShape& shape,
                                    const PenetrationSpheres& spheres, const JointLimits& limits) {
  weights.validate();
  const int t_count = static_cast<int>(params.size());
  const int n = skeleton.joint_count();
  targets.validate(n);
  limits.validate();
  spheres.validate(n);

  std::vector<FkResult> fk;
  fk.reserve(t_count);
  for (const auto& p : params) fk.push_back(forward_kinematics_full(p, shape, skeleton));

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(t_count * kPoseDim);
  std::vector<JointMatrix> djoints(t_count, JointMatrix::Zero(n, 3));

  for (int t = 0; t < t_count; ++t) {
    auto gparam = grad.segment(t * kPoseDim, kPoseDim);
    const JointMatrix& joints = fk[t].joints;

    if (weights.lambda_joint > 0) {
      const double lj = weights.lambda_joint;
      for (int j = 0; j < n; ++j) {
        if (targets.k3d[t].confidence[j] > 0.0) {
          for (int c = 0; c < 3; ++c) {
            djoints[t](j, c) += lj * huber_grad(joints(j, c) - targets.k3d[t].points(j, c));
          }
        }
        if (targets.k2d[t].confidence[j] > 0.0) {
          const auto& cam = targets.cameras[t];
          const Vec3 xc = cam.rotation * joints.row(j).transpose() + cam.scale * cam.translation;
          const Vec2 proj = project_perspective(cam, joints.row(j).transpose());
          Vec2 gres;
          for (int c = 0; c < 2; ++c) gres[c] = huber_grad(proj[c] - targets.k2d[t].points(j, c));
          const Eigen::Matrix<double, 2, 3> jp = projection_jacobian(cam.intrinsics, xc);
          djoints[t].row(j) += lj * (gres.transpose() * jp * cam.rotation);
        }
      }
      gparam += lj * huber_grad_vec(params[t].flatten() - init[t].flatten());
    }

    if (weights.lambda_smooth > 0 && t > 0) {
      const double ls = weights.lambda_smooth;
      const Eigen::VectorXd gp = huber_grad_vec(params[t].flatten() - params[t - 1].flatten());
      gparam += ls * gp;
      grad.segment((t - 1) * kPoseDim, kPoseDim) -= ls * gp;
      const Eigen::MatrixXd d = joints - fk[t - 1].joints;
      for (int i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) {
          const double g = ls * huber_grad(d(i, c));
          djoints[t](i, c) += g;
          djoints[t - 1](i, c) -= g;
        }
      }
    }

    if (weights.lambda_pen > 0) {
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          if (spheres.is_excluded(i, j)) continue;
          const Vec3 diff = (joints.row(i) - joints.row(j)).transpose();
          const double d = diff.norm();
          const double overlap = spheres.radii[i] + spheres.radii[j] - d;
          if (overlap <= 0.0 || d < 1e-12) continue;
          const Vec3 g = weights.lambda_pen * (-2.0 * overlap) * diff / d;
          djoints[t].row(i) += g.transpose();
          djoints[t].row(j) -= g.transpose();
        }
      }
    }

    if (weights.lambda_phy > 0) {
      Eigen::VectorXd v = params[t].flatten();
      for (int r = 0; r < kRotationCount; ++r) {
        const int off = r < kBodyRotations          ? 6 + 3 * r
                        : r < kBodyRotations + kHandRotations ? 72 + 3 * (r - kBodyRotations)
                                                              : 162;
        for (int c = 0; c < 3; ++c) {
          const int ch = 3 * r + c;
          const double theta = v[off + c];
          double g = 0.0;
          if (theta > limits.max[ch]) g = 2.0 * (theta - limits.max[ch]);
          if (theta < limits.min[ch]) g = -2.0 * (limits.min[ch] - theta);
          gparam[off + c] += weights.lambda_phy * g;
        }
      }
    }
  }

  for (int t = 0; t < t_count; ++t) {
    grad.segment(t * kPoseDim, kPoseDim) +=
        fk_backprop(params[t], shape, skeleton, fk[t], djoints[t]);
  }
  return grad;
}

namespace {

// IRLS curvature weight for huber(r): huber'(r) = w(r) * r exactly.
double huber_weight(double r) {
  const double a = std::abs(r);
  return a <= kHuberDelta ? 1.0 / kHuberDelta : 1.0 / a;
}

// Block-tridiagonal normal equations: diag[t] on the diagonal, off[t] coupling
// frame t to frame t+1. Solved by block LDL^T elimination.
struct NormalSystem {
  std::vector<Eigen::MatrixXd> diag;
  std::vector<Eigen::MatrixXd> off;
  Eigen::VectorXd rhs;

  explicit NormalSystem(int t_count)
      : diag(t_count, Eigen::MatrixXd::Zero(kPoseDim, kPoseDim)),
        off(std::max(0, t_count - 1), Eigen::MatrixXd::Zero(kPoseDim, kPoseDim)),
        rhs(Eigen::VectorXd::Zero(t_count * kPoseDim)) {}

  // rank-one residual with Jacobian row j on frame t
  void add(int t, const Eigen::RowVectorXd& j, double r, double w) {
    diag[t].noalias() += w * j.transpose() * j;
    rhs.segment(t * kPoseDim, kPoseDim).noalias() -= w * r * j.transpose();
  }

  // residual j_a . x_t + j_b . x_{t-1}
  void add_pair(int t, const Eigen::RowVectorXd& ja, const Eigen::RowVectorXd& jb, double r,
                double w) {
    diag[t].noalias() += w * ja.transpose() * ja;
    diag[t - 1].noalias() += w * jb.transpose() * jb;
    off[t - 1].noalias() += w * jb.transpose() * ja;  // couples x_{t-1} rows to x_t cols
    rhs.segment(t * kPoseDim, kPoseDim).noalias() -= w * r * ja.transpose();
    rhs.segment((t - 1) * kPoseDim, kPoseDim).noalias() -= w * r * jb.transpose();
  }

  Eigen::VectorXd solve(double damping) const {
    const int t_count = static_cast<int>(diag.size());
    Eigen::MatrixXd a = diag[0];
    Eigen::VectorXd b = rhs.segment(0, kPoseDim);
    std::vector<Eigen::LDLT<Eigen::MatrixXd>> fact;
    fact.reserve(t_count);
    std::vector<Eigen::VectorXd> fwd(t_count);
    for (int t = 0;; ++t) {
      Eigen::MatrixXd damped = a;
      damped.diagonal().array() += damping * (1.0 + a.diagonal().array().abs());
      fact.emplace_back(damped);
      fwd[t] = fact[t].solve(b);
      if (t + 1 == t_count) break;
      a = diag[t + 1] - off[t].transpose() * fact[t].solve(off[t]);
      b = rhs.segment((t + 1) * kPoseDim, kPoseDim) - off[t].transpose() * fwd[t];
    }
    Eigen::VectorXd x(t_count * kPoseDim);
    x.tail(kPoseDim) = fwd[t_count - 1];
    for (int t = t_count - 2; t >= 0; --t) {
      x.segment(t * kPoseDim, kPoseDim) =
          fwd[t] - fact[t].solve(off[t] * x.segment((t + 1) * kPoseDim, kPoseDim));
    }
    return x;
  }
};

}  // namespace

FitResult fit_sequence(const PoseSequence& init, const FittingTargets& targets,
                       const LossWeights& weights, const Skeleton& skeleton,
                       const BodyShape& shape, const PenetrationSpheres& spheres,
                       const JointLimits& limits, const OptimizerConfig& config) {
  const int t_count = static_cast<int>(init.size());
  if (t_count == 0) throw ValidationError("fit_sequence: empty initialization");
  const int n = skeleton.joint_count();
  weights.validate();
  targets.validate(n);
  spheres.validate(n);
  limits.validate();

  auto eval = [&](const PoseSequence& p) {
    return total_loss(p, init, targets, weights, skeleton, shape, spheres, limits);
  };

  PoseSequence current = init;
  const double initial_loss = eval(current);
  if (!std::isfinite(initial_loss)) throw ValidationError("non-finite loss at initialization");

  Eigen::VectorXd x(t_count * kPoseDim);
  for (int t = 0; t < t_count; ++t) x.segment(t * kPoseDim, kPoseDim) = init[t].flatten();

  FitResult result;
  result.params = current;
  result.loss_trace.reserve(config.iterations);
  double best = initial_loss;
  double damping = config.damping;
  int bad_streak = 0;

  for (int it = 0; it < config.iterations; ++it) {
    std::vector<FkResult> fk;
    std::vector<Eigen::MatrixXd> jpos;  // 3n x kPoseDim per frame
    fk.reserve(t_count);
    jpos.reserve(t_count);
    for (const auto& p : current) {
      fk.push_back(forward_kinematics_full(p, shape, skeleton));
      jpos.push_back(fk_position_jacobian(p, shape, skeleton, fk.back()));
    }

    NormalSystem sys(t_count);
    for (int t = 0; t < t_count; ++t) {
      const Eigen::VectorXd flat = current[t].flatten();
      const JointMatrix& joints = fk[t].joints;

      if (weights.lambda_joint > 0) {
        const double lj = weights.lambda_joint;
        for (int j = 0; j < n; ++j) {
          if (targets.k3d[t].confidence[j] > 0.0) {
            for (int c = 0; c < 3; ++c) {
              const double r = joints(j, c) - targets.k3d[t].points(j, c);
              sys.add(t, jpos[t].row(3 * j + c), r, lj * huber_weight(r));
            }
          }
          if (targets.k2d[t].confidence[j] > 0.0) {
            const auto& cam = targets.cameras[t];
            const Vec3 xc = cam.rotation * joints.row(j).transpose() + cam.scale * cam.translation;
            const Vec2 proj = project_perspective(cam, joints.row(j).transpose());
            const Eigen::Matrix<double, 2, 3> jp =
                projection_jacobian(cam.intrinsics, xc) * cam.rotation;
            const Eigen::Matrix<double, 2, Eigen::Dynamic> rows =
                jp * jpos[t].middleRows(3 * j, 3);
            for (int c = 0; c < 2; ++c) {
              const double r = proj[c] - targets.k2d[t].points(j, c);
              sys.add(t, rows.row(c), r, lj * huber_weight(r));
            }
          }
        }
        // prior toward the initialization: identity Jacobian per channel
        const Eigen::VectorXd pr = flat - init[t].flatten();
        for (int i = 0; i < kPoseDim; ++i) {
          const double w = weights.lambda_joint * huber_weight(pr[i]);
          sys.diag[t](i, i) += w;
          sys.rhs[t * kPoseDim + i] -= w * pr[i];
        }
      }

      if (weights.lambda_smooth > 0 && t > 0) {
        const double ls = weights.lambda_smooth;
        const Eigen::VectorXd dp = flat - current[t - 1].flatten();
        for (int i = 0; i < kPoseDim; ++i) {
          const double w = ls * huber_weight(dp[i]);
          sys.diag[t](i, i) += w;
          sys.diag[t - 1](i, i) += w;
          sys.off[t - 1](i, i) -= w;
          sys.rhs[t * kPoseDim + i] -= w * dp[i];
          sys.rhs[(t - 1) * kPoseDim + i] += w * dp[i];
        }
        for (int j = 0; j < n; ++j) {
          for (int c = 0; c < 3; ++c) {
            const double r = joints(j, c) - fk[t - 1].joints(j, c);
            sys.add_pair(t, jpos[t].row(3 * j + c), -jpos[t - 1].row(3 * j + c), r,
                         ls * huber_weight(r));
          }
        }
      }

      if (weights.lambda_pen > 0) {
        for (int i = 0; i < n; ++i) {
          for (int j = i + 1; j < n; ++j) {
            if (spheres.is_excluded(i, j)) continue;
            const Vec3 diff = (joints.row(i) - joints.row(j)).transpose();
            const double d = diff.norm();
            const double overlap = spheres.radii[i] + spheres.radii[j] - d;
            if (overlap <= 0.0 || d < 1e-12) continue;
            // residual = overlap, loss = overlap^2 -> curvature weight 2
            const Eigen::RowVectorXd row =
                (-diff.transpose() / d) * (jpos[t].middleRows(3 * i, 3).eval() -
                                           jpos[t].middleRows(3 * j, 3).eval());
            sys.add(t, row, overlap, 2.0 * weights.lambda_pen);
          }
        }
      }

      if (weights.lambda_phy > 0) {
        for (int r = 0; r < kRotationCount; ++r) {
          const int off = r < kBodyRotations          ? 6 + 3 * r
                          : r < kBodyRotations + kHandRotations ? 72 + 3 * (r - kBodyRotations)
                                                                : 162;
          for (int c = 0; c < 3; ++c) {
            const int ch = 3 * r + c;
            const double theta = flat[off + c];
            double res = 0.0;
            if (theta > limits.max[ch]) res = theta - limits.max[ch];
            if (theta < limits.min[ch]) res = theta - limits.min[ch];
            if (res != 0.0) {
              const double w = 2.0 * weights.lambda_phy;
              sys.diag[t](off + c, off + c) += w;
              sys.rhs[t * kPoseDim + off + c] -= w * res;
            }
          }
        }
      }
    }

    const Eigen::VectorXd dx = sys.solve(damping);
    if (!dx.allFinite()) {
      damping = std::min(damping * config.damping_increase, 1e12);
      result.loss_trace.push_back(best);
      continue;
    }
    PoseSequence trial(t_count);
    const Eigen::VectorXd xt = x + dx;
    for (int t = 0; t < t_count; ++t) {
      trial[t] = WholeBodyPose::unflatten(xt.segment(t * kPoseDim, kPoseDim));
    }
    const double loss = eval(trial);

    if (std::isfinite(loss) && loss < best) {
      const double gain = best - loss;
      x = xt;
      current = trial;
      best = loss;
      result.params = current;
      damping = std::max(damping * config.damping_decrease, 1e-12);
      bad_streak = 0;
      result.loss_trace.push_back(best);
      if (gain < config.tolerance) break;
    } else {
      damping = std::min(damping * config.damping_increase, 1e12);
      result.loss_trace.push_back(best);
      if (damping >= 1e12) break;  // step size is effectively zero
      if (!std::isfinite(loss) || loss > 10.0 * std::max(initial_loss, 1e-12)) {
        if (++bad_streak >= 50) {
          throw DivergenceError("fit_sequence diverged after " + std::to_string(it + 1) +
                                " iterations (loss " + std::to_string(loss) + ")");
        }
      } else {
        bad_streak = 0;
      }
    }
  }
  return result;
}

}  // namespace mocap
