#include <doctest.h>

#include <random>

#include "mocap/errors.hpp"
#include "mocap/multiview.hpp"

using namespace mocap;

namespace {

std::mt19937 rng(4321);

Vec3 random_vec(std::mt19937& gen, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  return {d(gen), d(gen), d(gen)};
}

// Cameras on a ring of the given radius, all aimed at the origin.
std::vector<CameraState> ring_rig(int count, double radius = 3.0) {
  std::vector<CameraState> rig;
  for (int v = 0; v < count; ++v) {
    const double angle = 2.0 * M_PI * v / count;
    CameraState cam = CameraState::pinhole(500, 500, 320, 240);
    // camera heading: rotate the world so the origin sits on the +z axis
    cam.rotation = axis_angle_to_matrix(Vec3(0, angle, 0));
    cam.translation = Vec3(0, 0, radius);
    rig.push_back(cam);
  }
  return rig;
}

struct Rig {
  std::vector<CameraState> cameras;
  std::vector<Eigen::Matrix<double, Eigen::Dynamic, 3>> points;  // per frame

  std::vector<MultiViewObservation> observe() const {
    std::vector<MultiViewObservation> obs;
    for (size_t t = 0; t < points.size(); ++t) {
      MultiViewObservation o;
      o.frame_index = static_cast<int>(t);
      o.cameras = cameras;
      for (const auto& cam : cameras) {
        KeypointFrame2D view;
        view.points.resize(points[t].rows(), 2);
        view.confidence = Eigen::VectorXd::Ones(points[t].rows());
        for (int j = 0; j < points[t].rows(); ++j) {
          view.points.row(j) =
              project_perspective(cam, points[t].row(j).transpose()).transpose();
        }
        o.views.push_back(std::move(view));
      }
      obs.push_back(std::move(o));
    }
    return obs;
  }
};

Rig random_rig(std::mt19937& gen, int cams, int frames, int joints) {
  Rig rig;
  rig.cameras = ring_rig(cams);
  for (int t = 0; t < frames; ++t) {
    Eigen::Matrix<double, Eigen::Dynamic, 3> pts(joints, 3);
    for (int j = 0; j < joints; ++j) pts.row(j) = random_vec(gen, 0.5).transpose();
    rig.points.push_back(pts);
  }
  return rig;
}

double max_camera_rotation_error(const std::vector<CameraState>& a,
                                 const std::vector<CameraState>& b) {
  double worst = 0;
  for (size_t v = 0; v < a.size(); ++v) {
    worst = std::max(worst, rotation_distance(a[v].rotation, b[v].rotation));
  }
  return worst;
}

double max_point_error(const PointSequence& a, const PointSequence& b) {
  double worst = 0;
  for (size_t t = 0; t < a.size(); ++t) {
    worst = std::max(worst, (a[t] - b[t]).rowwise().norm().maxCoeff());
  }
  return worst;
}

}  // namespace

TEST_CASE("triangulate: two orthogonal ideal cameras") {
  CameraState a;  // K = [[1,0,0],[0,1,0]], identity extrinsics
  CameraState b;
  b.rotation = axis_angle_to_matrix(Vec3(0, M_PI / 2, 0));
  b.translation = Vec3(0, 0, 2);
  const Vec3 truth(0, 0, 1);
  const Vec2 pa = project_perspective(a, truth);
  const Vec2 pb = project_perspective(b, truth);
  const auto res = triangulate({pa, pb}, {1.0, 1.0}, {a, b});
  CHECK((res.point - truth).norm() < 1e-10);
  CHECK(res.reprojection_rms < 1e-10);
}

TEST_CASE("triangulate: duplicate views are degenerate") {
  CameraState a = CameraState::pinhole(500, 500, 320, 240);
  a.translation = Vec3(0, 0, 3);
  const Vec2 p = project_perspective(a, Vec3(0.1, -0.2, 0.4));
  CHECK_THROWS_AS(triangulate({p, p}, {1.0, 1.0}, {a, a}), DegenerateError);
}

TEST_CASE("triangulate: fewer than two usable views") {
  CameraState a = CameraState::pinhole(500, 500, 320, 240);
  a.translation = Vec3(0, 0, 3);
  CameraState b = a;
  b.rotation = axis_angle_to_matrix(Vec3(0, 1.0, 0));
  const Vec2 p(100, 100);
  CHECK_THROWS_AS(triangulate({p, p}, {1.0, 0.0}, {a, b}), ValidationError);
  CHECK_THROWS_AS(triangulate({p}, {1.0}, {a}), ValidationError);
}

TEST_CASE("triangulate: random rig recovery matches refinement oracle") {
  const auto rig = ring_rig(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 truth = random_vec(rng, 0.8);
    std::vector<Vec2> pix;
    std::vector<double> conf;
    for (const auto& cam : rig) {
      pix.push_back(project_perspective(cam, truth));
      conf.push_back(1.0);
    }
    const auto res = triangulate(pix, conf, rig);
    CHECK((res.point - truth).norm() < 1e-8);

    // independent oracle: Gauss-Newton on the reprojection error from the
    // DLT point must not move it (noiseless => DLT already optimal)
    Vec3 x = res.point;
    for (int it = 0; it < 10; ++it) {
      Mat3 h = Mat3::Zero();
      Vec3 g = Vec3::Zero();
      for (size_t v = 0; v < rig.size(); ++v) {
        const Vec3 xc = rig[v].rotation * x + rig[v].scale * rig[v].translation;
        const Eigen::Matrix<double, 2, 3> jp =
            projection_jacobian(rig[v].intrinsics, xc) * rig[v].rotation;
        const Vec2 r = project_perspective(rig[v], x) - pix[v];
        h += jp.transpose() * jp;
        g -= jp.transpose() * r;
      }
      x += h.ldlt().solve(g);
    }
    CHECK((res.point - x).norm() < 1e-8);
  }
}

TEST_CASE("bundle_adjust: exact init is a fixed point") {
  const Rig rig = random_rig(rng, 4, 3, 6);
  const auto obs = rig.observe();
  const auto res = bundle_adjust(obs, rig.points, BoneGraph{}, BundleWeights{});
  CHECK(res.objective_trace.back() < 1e-12);
  CHECK(max_camera_rotation_error(res.cameras, rig.cameras) < 1e-12);
  CHECK(max_point_error(res.points, rig.points) < 1e-12);
}

TEST_CASE("bundle_adjust: recovers a perturbed rig") {
  const Rig rig = random_rig(rng, 4, 1, 8);
  const auto obs = rig.observe();

  // perturb every camera except the gauge-fixing first one, plus the points
  std::vector<MultiViewObservation> noisy = obs;
  for (auto& o : noisy) {
    for (size_t v = 1; v < o.cameras.size(); ++v) {
      o.cameras[v].rotation =
          axis_angle_to_matrix(random_vec(rng, 0.01)) * o.cameras[v].rotation;
      o.cameras[v].translation += random_vec(rng, 0.01);
    }
  }
  PointSequence init = rig.points;
  for (auto& pts : init) {
    for (int j = 0; j < pts.rows(); ++j) pts.row(j) += random_vec(rng, 0.02).transpose();
  }

  // scale is a gauge freedom (scaling about the first camera's center keeps
  // every pixel fixed); one bone edge at its true length pins it
  BoneGraph bones;
  bones.edges = {{0, 1}};
  bones.target_length = {(rig.points[0].row(0) - rig.points[0].row(1)).norm()};
  BundleWeights w;
  w.lambda_b = 1.0;

  const auto res = bundle_adjust(noisy, init, bones, w);
  CHECK(res.objective_trace.back() < 1e-16);
  CHECK(max_camera_rotation_error(res.cameras, rig.cameras) < 1e-4);
  CHECK(max_point_error(res.points, rig.points) < 1e-6);
  for (size_t i = 1; i < res.objective_trace.size(); ++i) {
    CHECK(res.objective_trace[i] <= res.objective_trace[i - 1]);
  }
}

TEST_CASE("bundle_adjust: bone term pins lengths on noiseless data") {
  Rig rig = random_rig(rng, 4, 1, 4);
  const auto obs = rig.observe();

  BoneGraph bones;
  bones.edges = {{0, 1}, {1, 2}, {2, 3}};
  for (const auto& [i, j] : bones.edges) {
    bones.target_length.push_back((rig.points[0].row(i) - rig.points[0].row(j)).norm());
  }

  PointSequence init = rig.points;
  for (int j = 0; j < init[0].rows(); ++j) init[0].row(j) += random_vec(rng, 0.03).transpose();

  BundleWeights w;
  w.lambda_b = 1.0;
  const auto res = bundle_adjust(obs, init, bones, w);
  for (size_t e = 0; e < bones.edges.size(); ++e) {
    const auto& [i, j] = bones.edges[e];
    const double len = (res.points[0].row(i) - res.points[0].row(j)).norm();
    CHECK(std::abs(len - bones.target_length[e]) < 1e-6);
  }
}

TEST_CASE("bundle_adjust: gauge invariance under a rigid transform") {
  const Rig rig = random_rig(rng, 4, 1, 5);
  const auto obs = rig.observe();
  PointSequence init = rig.points;
  for (auto& pts : init) {
    for (int j = 0; j < pts.rows(); ++j) pts.row(j) += random_vec(rng, 0.02).transpose();
  }
  BoneGraph bones;  // pins the scale gauge in both runs
  bones.edges = {{0, 1}};
  bones.target_length = {(rig.points[0].row(0) - rig.points[0].row(1)).norm()};
  BundleWeights bw;
  bw.lambda_b = 1.0;

  // world transform X' = Q X + c; with R' = R Q^T and T' = T - R' c every
  // projection is unchanged (scale = 1 here)
  const Mat3 q = axis_angle_to_matrix(Vec3(0.3, -0.2, 0.5));
  const Vec3 c(0.4, -0.1, 0.7);
  std::vector<MultiViewObservation> moved = obs;
  PointSequence moved_init = init;
  for (auto& o : moved) {
    for (auto& cam : o.cameras) {
      cam.rotation = cam.rotation * q.transpose();
      cam.translation -= cam.rotation * c;
    }
  }
  for (auto& pts : moved_init) {
    pts = (pts * q.transpose()).rowwise() + c.transpose();
  }

  const auto a = bundle_adjust(obs, init, bones, bw);
  const auto b = bundle_adjust(moved, moved_init, bones, bw);
  CHECK(std::abs(a.objective_trace.back() - b.objective_trace.back()) < 1e-9);
  // solutions agree up to the applied transform
  for (size_t t = 0; t < a.points.size(); ++t) {
    const Eigen::MatrixXd mapped = (a.points[t] * q.transpose()).rowwise() + c.transpose();
    CHECK((mapped - b.points[t]).rowwise().norm().maxCoeff() < 1e-6);
  }
}

TEST_CASE("bundle_adjust: input validation") {
  const Rig rig = random_rig(rng, 4, 1, 3);
  auto obs = rig.observe();
  CHECK_THROWS_AS(bundle_adjust({}, {}, BoneGraph{}, BundleWeights{}), ValidationError);
  CHECK_THROWS_AS(bundle_adjust(obs, {}, BoneGraph{}, BundleWeights{}), ValidationError);

  BoneGraph bad;
  bad.edges = {{0, 99}};
  bad.target_length = {0.5};
  CHECK_THROWS_AS(bundle_adjust(obs, rig.points, bad, BundleWeights{}), ValidationError);

  BundleWeights negw;
  negw.lambda_t = -1;
  CHECK_THROWS_AS(bundle_adjust(obs, rig.points, BoneGraph{}, negw), ValidationError);

  auto single = obs;
  single[0].views.resize(1);
  single[0].cameras.resize(1);
  CHECK_THROWS_AS(bundle_adjust(single, rig.points, BoneGraph{}, BundleWeights{}),
                  ValidationError);
}
