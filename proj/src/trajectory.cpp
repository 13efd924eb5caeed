#include "mocap/trajectory.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "mocap/errors.hpp"

namespace mocap {

// ---------------------------------------------------------------------------
// Keyframe selection

void KeyframeSelector::validate() const {
  if (info_score.size() != bbox_area.size()) {
    throw ValidationError("keyframe selector: score/area count mismatch");
  }
  if (!(frame_area > 0)) throw ValidationError("keyframe selector: frame area must be positive");
  for (const double a : bbox_area) {
    if (a < 0 || a > frame_area) throw ValidationError("bbox area outside [0, frame area]");
  }
}

std::vector<int> select_keyframes(const KeyframeSelector& selector) {
  selector.validate();
  std::vector<int> out;
  for (size_t t = 0; t < selector.info_score.size(); ++t) {
    const double scale = 1.0 - selector.bbox_area[t] / selector.frame_area;
    if (selector.info_score[t] > selector.info_threshold * scale) {
      out.push_back(static_cast<int>(t));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Masked sparse bundle adjustment

void BAProblem::validate() const {
  const int k = static_cast<int>(keyframes.size());
  if (k < 2) throw ValidationError("ba problem needs >= 2 keyframes");
  if (static_cast<int>(poses.size()) != k) throw ValidationError("ba problem pose count mismatch");
  for (const auto& c : correspondences) {
    if (c.source_key < 0 || c.source_key >= k || c.target_key < 0 || c.target_key >= k ||
        c.source_key == c.target_key) {
      throw ValidationError("ba correspondence keyframe out of range");
    }
    if (c.depth_index < 0 || c.depth_index >= inv_depth.size()) {
      throw ValidationError("ba correspondence depth index out of range");
    }
    if (c.weight < 0) throw ValidationError("ba correspondence weight must be >= 0");
  }
  if ((inv_depth.array() <= 0).any()) throw ValidationError("inverse depths must be positive");
}

BAProblem apply_masks(const BAProblem& problem, const std::vector<MaskRect>& masks) {
  problem.validate();
  if (masks.size() != problem.keyframes.size()) {
    throw ValidationError("apply_masks: mask/keyframe count mismatch");
  }
  BAProblem out = problem;
  for (auto& c : out.correspondences) {
    if (masks[c.source_key].contains(c.pixel)) {
      c.weight = 0.0;
      c.pixel.setZero();
      c.revision.setZero();
    }
  }
  return out;
}

namespace {

CameraState pinhole_of(const Eigen::Matrix<double, 2, 3>& intrinsics) {
  CameraState cam;
  cam.intrinsics = intrinsics;
  return cam;
}

}  // namespace

double ba_objective(const BAProblem& problem) {
  problem.validate();
  const CameraState cam = pinhole_of(problem.intrinsics);
  double obj = 0.0;
  for (const auto& c : problem.correspondences) {
    if (c.weight <= 0.0) continue;
    const Vec3 xs = backproject(cam, c.pixel, problem.inv_depth[c.depth_index]);
    const SE3 rel = problem.poses[c.target_key].compose(problem.poses[c.source_key].inverse());
    const Vec2 proj = project_perspective(cam, rel.apply(xs));
    obj += c.weight * (proj - (c.pixel + c.revision)).squaredNorm();
  }
  return obj;
}

BAResult solve_masked_ba(const BAProblem& problem, const BASolveConfig& config) {
  problem.validate();
  int surviving = 0;
  for (const auto& c : problem.correspondences) {
    if (c.weight > 0.0) ++surviving;
  }
  if (surviving == 0) throw ValidationError("solve_masked_ba: no surviving correspondences");

  const int k = static_cast<int>(problem.keyframes.size());
  const int d_count = static_cast<int>(problem.inv_depth.size());
  const int n = 6 * (k - 1) + d_count;
  auto pose_off = [](int key) { return 6 * (key - 1); };
  const int depth_base = 6 * (k - 1);
  const CameraState cam = pinhole_of(problem.intrinsics);

  BAProblem current = problem;
  const auto median_depth = [](const Eigen::VectorXd& d) {
    std::vector<double> v(d.data(), d.data() + d.size());
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
  };
  const double init_median = median_depth(current.inv_depth);
  // exact gauge transform: pin the median inverse depth, rescale translations
  const auto renormalize = [&](BAProblem& p) {
    const double scale = median_depth(p.inv_depth) / init_median;
    p.inv_depth /= scale;
    for (auto& pose : p.poses) pose.translation *= scale;
  };

  double best = ba_objective(current);
  BAResult result;
  result.poses = current.poses;
  result.inv_depth = current.inv_depth;
  result.objective_trace.reserve(config.iterations);

  double damping = config.damping;
  for (int it = 0; it < config.iterations; ++it) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);

    for (const auto& c : current.correspondences) {
      if (c.weight <= 0.0) continue;
      const double d = current.inv_depth[c.depth_index];
      const Vec3 xs = backproject(cam, c.pixel, d);
      const SE3& ps = current.poses[c.source_key];
      const SE3& pt = current.poses[c.target_key];
      const SE3 rel = pt.compose(ps.inverse());
      const Vec3 xt = rel.apply(xs);
      const Vec2 proj = project_perspective(cam, xt);
      const Vec2 r = proj - (c.pixel + c.revision);
      const Eigen::Matrix<double, 2, 3> jp = projection_jacobian(cam.intrinsics, xt);

      // column layout per residual: [target pose 6 | source pose 6 | depth]
      std::vector<int> cols;
      Eigen::MatrixXd rows(2, 13);
      int used = 0;
      // target pose update R_t <- R(w) R_t: dxt/dw = -skew(R_t xw) = -skew(xt - t_t)
      if (c.target_key != 0) {
        const Eigen::Matrix<double, 2, 3> jrot = jp * (-skew(xt - pt.translation));
        for (int m = 0; m < 3; ++m) {
          rows.col(used) = jrot.col(m);
          cols.push_back(pose_off(c.target_key) + m);
          ++used;
        }
        for (int m = 0; m < 3; ++m) {
          rows.col(used) = jp.col(m);
          cols.push_back(pose_off(c.target_key) + 3 + m);
          ++used;
        }
      }
      // source pose update: xw' = (R(w) R_s)^-1 (xs - t_s - dt)
      // => dxt/dw = R_rel skew(xs - t_s), dxt/dts = -R_rel
      if (c.source_key != 0) {
        const Eigen::Matrix<double, 2, 3> jrot = jp * rel.rotation * skew(xs - ps.translation);
        const Eigen::Matrix<double, 2, 3> jtr = -(jp * rel.rotation);
        for (int m = 0; m < 3; ++m) {
          rows.col(used) = jrot.col(m);
          cols.push_back(pose_off(c.source_key) + m);
          ++used;
        }
        for (int m = 0; m < 3; ++m) {
          rows.col(used) = jtr.col(m);
          cols.push_back(pose_off(c.source_key) + 3 + m);
          ++used;
        }
      }
      // inverse depth: xs = ray / d => dxs/dd = -xs/d; dxt/dd = -R_rel xs / d
      rows.col(used) = jp * (rel.rotation * (-xs / d));
      cols.push_back(depth_base + c.depth_index);
      ++used;

      for (int rc = 0; rc < 2; ++rc) {
        for (int a = 0; a < used; ++a) {
          g[cols[a]] -= c.weight * r[rc] * rows(rc, a);
          for (int b = 0; b < used; ++b) {
            h(cols[a], cols[b]) += c.weight * rows(rc, a) * rows(rc, b);
          }
        }
      }
    }

    if (g.norm() < 1e-14) {
      result.objective_trace.push_back(best);
      break;
    }

    Eigen::MatrixXd damped = h;
    damped.diagonal().array() += damping * (1.0 + h.diagonal().array().abs());
    const Eigen::VectorXd dx = Eigen::LDLT<Eigen::MatrixXd>(damped).solve(g);

    bool accepted = false;
    if (dx.allFinite()) {
      BAProblem trial = current;
      for (int key = 1; key < k; ++key) {
        const Vec3 w = dx.segment<3>(pose_off(key));
        trial.poses[key].rotation = axis_angle_to_matrix(w) * current.poses[key].rotation;
        trial.poses[key].translation += dx.segment<3>(pose_off(key) + 3);
      }
      trial.inv_depth += dx.tail(d_count);
      trial.inv_depth = trial.inv_depth.cwiseMax(problem.inv_depth / config.depth_range)
                            .cwiseMin(problem.inv_depth * config.depth_range);
      renormalize(trial);  // evaluate in the gauge-fixed configuration
      double obj = std::numeric_limits<double>::infinity();
      try {
        obj = ba_objective(trial);
      } catch (const DegenerateError&) {
      }
      if (std::isfinite(obj) && obj < best) {
        const double gain = best - obj;
        current = std::move(trial);
        best = obj;
        damping = std::max(damping * config.damping_decrease, 1e-15);
        accepted = true;
        result.objective_trace.push_back(best);
        if (gain < config.tolerance) break;
      }
    }
    if (!accepted) {
      damping *= config.damping_increase;
      result.objective_trace.push_back(best);
      if (damping > 1e12) break;
    }
  }

  result.poses = current.poses;
  result.inv_depth = current.inv_depth;
  if (result.objective_trace.empty()) result.objective_trace.push_back(best);
  return result;
}

// ---------------------------------------------------------------------------
// Global human trajectory

double geman_mcclure(const Eigen::VectorXd& residual, double sigma) {
  if (!(sigma > 0)) throw ValidationError("geman_mcclure: sigma must be positive");
  const double s = residual.squaredNorm();
  return sigma * sigma * s / (sigma * sigma + s);
}

void GlobalHumanState::validate() const {
  if (phi.size() != gamma.size() || phi.size() != theta.size()) {
    throw ValidationError("global human state: sequence length mismatch");
  }
  if (!(alpha > 0)) throw ValidationError("global human state: alpha must be positive");
}

WholeBodyPose GlobalHumanState::frame_pose(int t) const {
  WholeBodyPose p = theta[t];
  p.global_orient = phi[t];
  p.root_translation = gamma[t];
  return p;
}

JointSequence state_joints(const GlobalHumanState& state, const Skeleton& skeleton) {
  state.validate();
  JointSequence joints;
  joints.reserve(state.length());
  for (int t = 0; t < state.length(); ++t) {
    joints.push_back(forward_kinematics(state.frame_pose(t), state.beta, skeleton));
  }
  return joints;
}

namespace {

CameraState scaled_camera(const CameraState& cam, double alpha) {
  CameraState out = cam;
  out.scale = alpha;
  return out;
}

}  // namespace

double loss_data_global(const GlobalHumanState& state, const std::vector<KeypointFrame2D>& k2d,
                        const std::vector<CameraState>& cameras, const Skeleton& skeleton,
                        double sigma) {
  state.validate();
  if (k2d.size() != static_cast<size_t>(state.length()) || k2d.size() != cameras.size()) {
    throw ValidationError("loss_data_global: sequence length mismatch");
  }
  const int n = skeleton.joint_count();
  double loss = 0.0;
  for (int t = 0; t < state.length(); ++t) {
    k2d[t].validate(n);
    const JointMatrix joints = forward_kinematics(state.frame_pose(t), state.beta, skeleton);
    const CameraState cam = scaled_camera(cameras[t], state.alpha);
    for (int j = 0; j < n; ++j) {
      const double w = k2d[t].confidence[j];
      if (w <= 0.0) continue;
      const Vec2 proj = project_perspective(cam, joints.row(j).transpose());
      loss += w * geman_mcclure(proj - k2d[t].points.row(j).transpose(), sigma);
    }
  }
  return loss;
}

double loss_smooth_global(const JointSequence& joints) {
  double loss = 0.0;
  for (size_t t = 1; t < joints.size(); ++t) loss += (joints[t] - joints[t - 1]).squaredNorm();
  return loss;
}

void GroundPlane::validate() const {
  if (std::abs(normal.norm() - 1.0) > 1e-9) {
    throw ValidationError("ground plane normal must be unit length");
  }
}

std::vector<int> foot_joint_indices(const Skeleton& skeleton) {
  std::vector<int> feet;
  for (int j = 0; j < skeleton.joint_count(); ++j) {
    if (skeleton.group[j] == JointGroup::Foot) feet.push_back(j);
  }
  return feet;
}

Eigen::MatrixXd detect_foot_contact(const JointSequence& joints, const Skeleton& skeleton,
                                    const GroundPlane& ground, const ContactModel& model) {
  ground.validate();
  const auto feet = foot_joint_indices(skeleton);
  const int t_count = static_cast<int>(joints.size());
  Eigen::MatrixXd contacts = Eigen::MatrixXd::Zero(t_count, feet.size());
  for (int t = 0; t < t_count; ++t) {
    for (size_t f = 0; f < feet.size(); ++f) {
      const Vec3 x = joints[t].row(feet[f]).transpose();
      double speed = 0.0;
      if (t + 1 < t_count) {
        speed = (joints[t + 1].row(feet[f]) - joints[t].row(feet[f])).norm();
      } else if (t > 0) {
        speed = (joints[t].row(feet[f]) - joints[t - 1].row(feet[f])).norm();
      }
      contacts(t, f) = ground.distance(x) < model.height_threshold &&
                               speed < model.velocity_threshold
                           ? 1.0
                           : 0.0;
    }
  }
  return contacts;
}

double loss_skate(const JointSequence& stage1, const JointSequence& stage2,
                  const Eigen::MatrixXd& contacts, const Skeleton& skeleton) {
  if (stage1.size() != stage2.size()) throw ValidationError("loss_skate: stage length mismatch");
  const auto feet = foot_joint_indices(skeleton);
  if (contacts.rows() != static_cast<int>(stage1.size()) ||
      contacts.cols() != static_cast<int>(feet.size())) {
    throw ValidationError("loss_skate: contact matrix shape mismatch");
  }
  double loss = 0.0;
  for (size_t t = 0; t + 1 < stage1.size(); ++t) {
    for (size_t f = 0; f < feet.size(); ++f) {
      const double c = contacts(t, f);
      loss += c * (stage2[t + 1].row(feet[f]) - stage2[t].row(feet[f])).norm();
      loss += (1.0 - c) * (stage1[t + 1].row(feet[f]) - stage1[t].row(feet[f])).norm();
    }
  }
  return loss;
}

double loss_contact(const JointSequence& joints, const Eigen::MatrixXd& contacts,
                    const Skeleton& skeleton, const GroundPlane& ground, double delta) {
  ground.validate();
  const auto feet = foot_joint_indices(skeleton);
  if (contacts.rows() != static_cast<int>(joints.size()) ||
      contacts.cols() != static_cast<int>(feet.size())) {
    throw ValidationError("loss_contact: contact matrix shape mismatch");
  }
  double loss = 0.0;
  for (size_t t = 0; t < joints.size(); ++t) {
    for (size_t f = 0; f < feet.size(); ++f) {
      if (contacts(t, f) <= 0.0) continue;
      loss += contacts(t, f) *
              std::max(ground.distance(joints[t].row(feet[f]).transpose()) - delta, 0.0);
    }
  }
  return loss;
}

double stage1_objective(const GlobalHumanState& state, const std::vector<KeypointFrame2D>& k2d,
                        const std::vector<CameraState>& cameras, const Skeleton& skeleton,
                        const TrajectoryWeights& weights, double sigma) {
  return weights.lambda_data * loss_data_global(state, k2d, cameras, skeleton, sigma) +
         weights.lambda_smooth * loss_smooth_global(state_joints(state, skeleton));
}

namespace {

// dJ/d(phi, gamma): 3n x 6 slice of the FK position Jacobian.
Eigen::MatrixXd frame_jacobian(const GlobalHumanState& state, int t, const Skeleton& skeleton,
                               const FkResult& fk) {
  const Eigen::MatrixXd full =
      fk_position_jacobian(state.frame_pose(t), state.beta, skeleton, fk);
  return full.leftCols<6>();
}

}  // namespace

Eigen::VectorXd stage1_gradient(const GlobalHumanState& state,
                                const std::vector<KeypointFrame2D>& k2d,
                                const std::vector<CameraState>& cameras, const Skeleton& skeleton,
                                const TrajectoryWeights& weights, double sigma) {
  state.validate();
  if (k2d.size() != static_cast<size_t>(state.length()) || k2d.size() != cameras.size()) {
    throw ValidationError("stage1_gradient: sequence length mismatch");
  }
  const int n = skeleton.joint_count();
  const int t_count = state.length();
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(6 * t_count);

  std::vector<FkResult> fk;
  std::vector<Eigen::MatrixXd> jac;
  fk.reserve(t_count);
  jac.reserve(t_count);
  for (int t = 0; t < t_count; ++t) {
    fk.push_back(forward_kinematics_full(state.frame_pose(t), state.beta, skeleton));
    jac.push_back(frame_jacobian(state, t, skeleton, fk.back()));
  }

  for (int t = 0; t < t_count; ++t) {
    auto gseg = grad.segment<6>(6 * t);
    const JointMatrix& joints = fk[t].joints;
    const CameraState cam = scaled_camera(cameras[t], state.alpha);
    for (int j = 0; j < n; ++j) {
      const double w = k2d[t].confidence[j];
      if (w <= 0.0) continue;
      const Vec3 xc = cam.rotation * joints.row(j).transpose() + cam.scale * cam.translation;
      const Vec2 r =
          project_perspective(cam, joints.row(j).transpose()) - k2d[t].points.row(j).transpose();
      // d rho / d r = 2 sigma^4 r / (sigma^2 + |r|^2)^2
      const double s2 = sigma * sigma;
      const double denom = s2 + r.squaredNorm();
      const Vec2 drho = 2.0 * s2 * s2 * r / (denom * denom);
      const Eigen::Matrix<double, 2, 3> jp =
          projection_jacobian(cam.intrinsics, xc) * cam.rotation;
      gseg += weights.lambda_data * w *
              (drho.transpose() * jp * jac[t].middleRows(3 * j, 3)).transpose();
    }
    if (weights.lambda_smooth > 0 && t + 1 < t_count) {
      const Eigen::MatrixXd d = joints - fk[t + 1].joints;
      for (int j = 0; j < n; ++j) {
        const Vec3 dj = 2.0 * weights.lambda_smooth * d.row(j).transpose();
        gseg += (dj.transpose() * jac[t].middleRows(3 * j, 3)).transpose();
        grad.segment<6>(6 * (t + 1)) -=
            (dj.transpose() * jac[t + 1].middleRows(3 * j, 3)).transpose();
      }
    }
  }
  return grad;
}

namespace {

// Shared damped Gauss-Newton driver over an opaque parameter vector.
template <typename Objective, typename BuildSystem, typename Apply>
std::vector<double> run_gauss_newton(Eigen::VectorXd& x, const Objective& objective,
                                     const BuildSystem& build, const Apply& apply,
                                     const StageConfig& config) {
  double best = objective(x);
  if (!std::isfinite(best)) throw ValidationError("non-finite objective at initialization");
  std::vector<double> trace;
  trace.reserve(config.iterations);
  double damping = config.damping;
  for (int it = 0; it < config.iterations; ++it) {
    Eigen::MatrixXd h;
    Eigen::VectorXd g;
    build(x, h, g);
    if (g.norm() < 1e-14) {
      trace.push_back(best);
      break;
    }
    Eigen::MatrixXd damped = h;
    damped.diagonal().array() += damping * (1.0 + h.diagonal().array().abs());
    const Eigen::VectorXd dx = Eigen::LDLT<Eigen::MatrixXd>(damped).solve(g);
    bool accepted = false;
    if (dx.allFinite()) {
      const Eigen::VectorXd xt = apply(x, dx);
      double obj = std::numeric_limits<double>::infinity();
      try {
        obj = objective(xt);
      } catch (const DegenerateError&) {
      }
      if (std::isfinite(obj) && obj < best) {
        const double gain = best - obj;
        x = xt;
        best = obj;
        damping = std::max(damping * config.damping_decrease, 1e-15);
        accepted = true;
        trace.push_back(best);
        if (gain < config.tolerance) break;
      }
    }
    if (!accepted) {
      damping *= config.damping_increase;
      trace.push_back(best);
      if (damping > 1e12) break;
    }
  }
  if (trace.empty()) trace.push_back(best);
  return trace;
}

GlobalHumanState state_with(const GlobalHumanState& base, const Eigen::VectorXd& x) {
  GlobalHumanState s = base;
  for (int t = 0; t < s.length(); ++t) {
    s.phi[t] = x.segment<3>(6 * t);
    s.gamma[t] = x.segment<3>(6 * t + 3);
  }
  return s;
}

Eigen::VectorXd state_vector(const GlobalHumanState& s) {
  Eigen::VectorXd x(6 * s.length());
  for (int t = 0; t < s.length(); ++t) {
    x.segment<3>(6 * t) = s.phi[t];
    x.segment<3>(6 * t + 3) = s.gamma[t];
  }
  return x;
}

}  // namespace

Stage1Result optimize_stage1(const GlobalHumanState& init,
                             const std::vector<KeypointFrame2D>& k2d,
                             const std::vector<CameraState>& cameras, const Skeleton& skeleton,
                             const TrajectoryWeights& weights, const StageConfig& config) {
  init.validate();
  const int n = skeleton.joint_count();
  const int t_count = init.length();

  auto objective = [&](const Eigen::VectorXd& x) {
    return stage1_objective(state_with(init, x), k2d, cameras, skeleton, weights);
  };

  auto build = [&](const Eigen::VectorXd& x, Eigen::MatrixXd& h, Eigen::VectorXd& g) {
    const GlobalHumanState s = state_with(init, x);
    h = Eigen::MatrixXd::Zero(6 * t_count, 6 * t_count);
    g = Eigen::VectorXd::Zero(6 * t_count);
    std::vector<FkResult> fk;
    std::vector<Eigen::MatrixXd> jac;
    for (int t = 0; t < t_count; ++t) {
      fk.push_back(forward_kinematics_full(s.frame_pose(t), s.beta, skeleton));
      jac.push_back(frame_jacobian(s, t, skeleton, fk.back()));
    }
    for (int t = 0; t < t_count; ++t) {
      const CameraState cam = scaled_camera(cameras[t], s.alpha);
      for (int j = 0; j < n; ++j) {
        const double w = k2d[t].confidence[j];
        if (w <= 0.0) continue;
        const Vec3 xj = fk[t].joints.row(j).transpose();
        const Vec3 xc = cam.rotation * xj + cam.scale * cam.translation;
        const Vec2 r = project_perspective(cam, xj) - k2d[t].points.row(j).transpose();
        // IRLS weight for geman-mcclure: rho'(s) with s = |r|^2
        const double s2 = kGemanMcClureSigma * kGemanMcClureSigma;
        const double irls = s2 * s2 / ((s2 + r.squaredNorm()) * (s2 + r.squaredNorm()));
        const Eigen::Matrix<double, 2, 6> rows = projection_jacobian(cam.intrinsics, xc) *
                                                 cam.rotation * jac[t].middleRows(3 * j, 3);
        const double wr = 2.0 * weights.lambda_data * w * irls;
        h.block<6, 6>(6 * t, 6 * t).noalias() += wr * rows.transpose() * rows;
        g.segment<6>(6 * t).noalias() -= wr * rows.transpose() * r;
      }
      if (weights.lambda_smooth > 0 && t > 0) {
        for (int j = 0; j < n; ++j) {
          const Eigen::Matrix<double, 3, 6> ja = jac[t].middleRows(3 * j, 3);
          const Eigen::Matrix<double, 3, 6> jb = jac[t - 1].middleRows(3 * j, 3);
          const Vec3 r = (fk[t].joints.row(j) - fk[t - 1].joints.row(j)).transpose();
          const double wr = 2.0 * weights.lambda_smooth;
          h.block<6, 6>(6 * t, 6 * t).noalias() += wr * ja.transpose() * ja;
          h.block<6, 6>(6 * (t - 1), 6 * (t - 1)).noalias() += wr * jb.transpose() * jb;
          h.block<6, 6>(6 * (t - 1), 6 * t).noalias() -= wr * jb.transpose() * ja;
          h.block<6, 6>(6 * t, 6 * (t - 1)).noalias() -= wr * ja.transpose() * jb;
          g.segment<6>(6 * t).noalias() -= wr * ja.transpose() * r;
          g.segment<6>(6 * (t - 1)).noalias() += wr * jb.transpose() * r;
        }
      }
    }
  };

  auto apply = [](const Eigen::VectorXd& x, const Eigen::VectorXd& dx) {
    return Eigen::VectorXd(x + dx);
  };

  Eigen::VectorXd x = state_vector(init);
  Stage1Result out;
  out.objective_trace = run_gauss_newton(x, objective, build, apply, config);
  out.state = state_with(init, x);
  out.joints = state_joints(out.state, skeleton);
  return out;
}

double stage2_objective(const GlobalHumanState& state, const std::vector<KeypointFrame2D>& k2d,
                        const std::vector<CameraState>& cameras, const Skeleton& skeleton,
                        const JointSequence& stage1_joints, const Eigen::MatrixXd& contacts,
                        const GroundPlane& ground, const ContactModel& model,
                        const TrajectoryWeights& weights, double sigma) {
  const JointSequence joints = state_joints(state, skeleton);
  return weights.lambda_data * loss_data_global(state, k2d, cameras, skeleton, sigma) +
         weights.lambda_skate * loss_skate(stage1_joints, joints, contacts, skeleton) +
         weights.lambda_contact *
             loss_contact(joints, contacts, skeleton, ground, model.contact_distance);
}

Stage2Result optimize_stage2(const GlobalHumanState& init,
                             const std::vector<KeypointFrame2D>& k2d,
                             const std::vector<CameraState>& cameras, const Skeleton& skeleton,
                             const JointSequence& stage1_joints, const Eigen::MatrixXd& contacts,
                             const GroundPlane& ground_init, const ContactModel& model,
                             const TrajectoryWeights& weights, const StageConfig& config) {
  init.validate();
  ground_init.validate();
  const int n = skeleton.joint_count();
  const int t_count = init.length();
  const auto feet = foot_joint_indices(skeleton);
  const int nvar = 6 * t_count + 4;  // plane appended: normal (renormalized) + offset

  auto unpack_plane = [](const Eigen::VectorXd& x) {
    GroundPlane gp;
    gp.normal = x.segment<3>(x.size() - 4).normalized();
    gp.offset = x[x.size() - 1];
    return gp;
  };

  auto objective = [&](const Eigen::VectorXd& x) {
    return stage2_objective(state_with(init, x), k2d, cameras, skeleton, stage1_joints, contacts,
                            unpack_plane(x), model, weights);
  };

  auto build = [&](const Eigen::VectorXd& x, Eigen::MatrixXd& h, Eigen::VectorXd& g) {
    const GlobalHumanState s = state_with(init, x);
    const GroundPlane gp = unpack_plane(x);
    h = Eigen::MatrixXd::Zero(nvar, nvar);
    g = Eigen::VectorXd::Zero(nvar);
    std::vector<FkResult> fk;
    std::vector<Eigen::MatrixXd> jac;
    for (int t = 0; t < t_count; ++t) {
      fk.push_back(forward_kinematics_full(s.frame_pose(t), s.beta, skeleton));
      jac.push_back(frame_jacobian(s, t, skeleton, fk.back()));
    }

    for (int t = 0; t < t_count; ++t) {
      const CameraState cam = scaled_camera(cameras[t], s.alpha);
      for (int j = 0; j < n; ++j) {
        const double w = k2d[t].confidence[j];
        if (w <= 0.0) continue;
        const Vec3 xj = fk[t].joints.row(j).transpose();
        const Vec3 xc = cam.rotation * xj + cam.scale * cam.translation;
        const Vec2 r = project_perspective(cam, xj) - k2d[t].points.row(j).transpose();
        const double s2 = kGemanMcClureSigma * kGemanMcClureSigma;
        const double irls = s2 * s2 / ((s2 + r.squaredNorm()) * (s2 + r.squaredNorm()));
        const Eigen::Matrix<double, 2, 6> rows = projection_jacobian(cam.intrinsics, xc) *
                                                 cam.rotation * jac[t].middleRows(3 * j, 3);
        const double wr = 2.0 * weights.lambda_data * w * irls;
        h.block<6, 6>(6 * t, 6 * t).noalias() += wr * rows.transpose() * rows;
        g.segment<6>(6 * t).noalias() -= wr * rows.transpose() * r;
      }

      // contact-frame skate: c |J_{t+1}(f) - J_t(f)|, IRLS weight 1/|r|
      if (weights.lambda_skate > 0 && t + 1 < t_count) {
        for (size_t f = 0; f < feet.size(); ++f) {
          const double c = contacts(t, f);
          if (c <= 0.0) continue;
          const int jf = feet[f];
          const Vec3 r = (fk[t + 1].joints.row(jf) - fk[t].joints.row(jf)).transpose();
          const double irls = 1.0 / std::max(r.norm(), 1e-4);
          const Eigen::Matrix<double, 3, 6> ja = jac[t + 1].middleRows(3 * jf, 3);
          const Eigen::Matrix<double, 3, 6> jb = jac[t].middleRows(3 * jf, 3);
          const double wr = weights.lambda_skate * c * irls;
          h.block<6, 6>(6 * (t + 1), 6 * (t + 1)).noalias() += wr * ja.transpose() * ja;
          h.block<6, 6>(6 * t, 6 * t).noalias() += wr * jb.transpose() * jb;
          h.block<6, 6>(6 * t, 6 * (t + 1)).noalias() -= wr * jb.transpose() * ja;
          h.block<6, 6>(6 * (t + 1), 6 * t).noalias() -= wr * ja.transpose() * jb;
          g.segment<6>(6 * (t + 1)).noalias() -= wr * ja.transpose() * r;
          g.segment<6>(6 * t).noalias() += wr * jb.transpose() * r;
        }
      }

      // contact hinge: c max(|n.x - offset| - delta, 0); linear residual wherever active
      if (weights.lambda_contact > 0) {
        for (size_t f = 0; f < feet.size(); ++f) {
          const double c = contacts(t, f);
          if (c <= 0.0) continue;
          const int jf = feet[f];
          const Vec3 xj = fk[t].joints.row(jf).transpose();
          const double signed_d = gp.normal.dot(xj) - gp.offset;
          const double dist = std::abs(signed_d);
          if (dist <= model.contact_distance) continue;
          const double sgn = signed_d >= 0 ? 1.0 : -1.0;
          // treat the hinge as an L1 residual: IRLS weight 1/(dist - delta)
          const double excess = dist - model.contact_distance;
          const double irls = 1.0 / std::max(excess, 1e-4);
          Eigen::VectorXd row = Eigen::VectorXd::Zero(nvar);
          row.segment<6>(6 * t) =
              sgn * (gp.normal.transpose() * jac[t].middleRows(3 * jf, 3)).transpose();
          row.segment<3>(nvar - 4) = sgn * xj;
          row[nvar - 1] = -sgn;
          const double wr = weights.lambda_contact * c * irls;
          h.noalias() += wr * row * row.transpose();
          g.noalias() -= wr * excess * row;
        }
      }
    }
  };

  auto apply = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& dx) {
    Eigen::VectorXd xt = x + dx;
    xt.segment<3>(nvar - 4).normalize();
    return xt;
  };

  Eigen::VectorXd x(nvar);
  x.head(6 * t_count) = state_vector(init);
  x.segment<3>(nvar - 4) = ground_init.normal;
  x[nvar - 1] = ground_init.offset;

  Stage2Result out;
  out.objective_trace = run_gauss_newton(x, objective, build, apply, config);
  out.state = state_with(init, x);
  out.ground = unpack_plane(x);
  out.joints = state_joints(out.state, skeleton);
  return out;
}

}  // namespace mocap
