#include <doctest.h>

#include <random>

#include "mocap/camera.hpp"
#include "mocap/errors.hpp"
#include "mocap/kinematics.hpp"
#include "mocap/skeleton.hpp"
#include "mocap/types.hpp"

using namespace mocap;

namespace {

std::mt19937 rng(12345);

Vec3 random_vec(double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  return {d(rng), d(rng), d(rng)};
}

WholeBodyPose random_pose(double rot_scale = 0.5) {
  WholeBodyPose p;
  p.global_orient = random_vec(rot_scale);
  p.root_translation = random_vec(1.0);
  for (int j = 0; j < kBodyRotations; ++j) p.theta_body.col(j) = random_vec(rot_scale);
  for (int j = 0; j < kHandRotations; ++j) p.theta_hand.col(j) = random_vec(rot_scale);
  p.theta_jaw = random_vec(rot_scale);
  return p;
}

Skeleton chain_skeleton(int joints) {
  Skeleton s;
  s.id = "chain";
  for (int j = 0; j < joints; ++j) {
    s.names.push_back("j" + std::to_string(j));
    s.parent.push_back(j - 1);
    s.rest_offset.push_back(Vec3(0.1 * (j + 1), 0.05, -0.02 * j));
    s.rot_index.push_back(j);
    s.group.push_back(JointGroup::Body);
  }
  s.beta_scale = Eigen::MatrixXd::Zero(kShapeDim, joints);
  return s;
}

}  // namespace

TEST_CASE("fk identity pose equals accumulated rest offsets") {
  const Skeleton skel = make_default_skeleton();
  const auto joints = forward_kinematics(WholeBodyPose{}, BodyShape{}, skel);
  for (int j = 0; j < skel.joint_count(); ++j) {
    Vec3 expect = Vec3::Zero();
    for (int k = j; k >= 0; k = skel.parent[k]) expect += skel.rest_offset[k];
    CHECK((joints.row(j).transpose() - expect).norm() == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("fk translation equivariance") {
  const Skeleton skel = make_default_skeleton();
  WholeBodyPose p;
  const auto base = forward_kinematics(p, BodyShape{}, skel);
  p.root_translation = Vec3(1, 2, 3);
  const auto shifted = forward_kinematics(p, BodyShape{}, skel);
  for (int j = 0; j < skel.joint_count(); ++j) {
    CHECK((shifted.row(j) - base.row(j) - Eigen::RowVector3d(1, 2, 3)).norm() < 1e-12);
  }
}

TEST_CASE("fk matches matrix-chain oracle on a 5-joint chain") {
  const Skeleton skel = chain_skeleton(5);
  for (int trial = 0; trial < 20; ++trial) {
    const WholeBodyPose pose = random_pose();
    const auto joints = forward_kinematics(pose, BodyShape{}, skel);

    // independent oracle: accumulate 4x4 homogeneous transforms
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = axis_angle_to_matrix(pose.global_orient);
    m.topRightCorner<3, 1>() = pose.root_translation;
    for (int j = 0; j < 5; ++j) {
      Eigen::Matrix4d local = Eigen::Matrix4d::Identity();
      local.topLeftCorner<3, 3>() = axis_angle_to_matrix(pose.theta_body.col(j));
      local.topRightCorner<3, 1>() = skel.rest_offset[j];
      // position first applies the parent frame to the offset, then the
      // joint's own rotation extends the frame
      const Vec3 pos = (m * Eigen::Vector4d(skel.rest_offset[j].x(), skel.rest_offset[j].y(),
                                            skel.rest_offset[j].z(), 1.0))
                           .head<3>();
      CHECK((joints.row(j).transpose() - pos).norm() < 1e-12);
      Eigen::Matrix4d step = Eigen::Matrix4d::Identity();
      step.topRightCorner<3, 1>() = skel.rest_offset[j];
      step.topLeftCorner<3, 3>() = axis_angle_to_matrix(pose.theta_body.col(j));
      m = m * step;
      (void)local;
    }
  }
}

TEST_CASE("fk rejects dimension mismatch") {
  Skeleton bad = chain_skeleton(3);
  bad.rot_index[2] = kRotationCount + 5;
  CHECK_THROWS_AS(forward_kinematics(WholeBodyPose{}, BodyShape{}, bad), ValidationError);
}

TEST_CASE("fk rigid equivariance and pose-independent bone lengths") {
  const Skeleton skel = make_default_skeleton();
  BodyShape shape;
  shape.beta.setRandom();
  shape.beta *= 0.5;
  const Eigen::VectorXd scales = skel.bone_scales(shape);

  for (int trial = 0; trial < 100; ++trial) {
    const WholeBodyPose pose = random_pose();
    const auto joints = forward_kinematics(pose, shape, skel);

    // bone lengths depend only on shape
    for (int j = 1; j < skel.joint_count(); ++j) {
      const double len = (joints.row(j) - joints.row(skel.parent[j])).norm();
      CHECK(std::abs(len - scales[j] * skel.rest_offset[j].norm()) < 1e-10);
    }

    if (trial < 10) {
      const Mat3 r0 = axis_angle_to_matrix(random_vec(2.0));
      const Vec3 t0 = random_vec(3.0);
      WholeBodyPose moved = pose;
      moved.global_orient = matrix_to_axis_angle(r0 * axis_angle_to_matrix(pose.global_orient));
      moved.root_translation = r0 * pose.root_translation + t0;
      const auto joints2 = forward_kinematics(moved, shape, skel);
      for (int j = 0; j < skel.joint_count(); ++j) {
        const Vec3 expect = r0 * joints.row(j).transpose() + t0;
        CHECK((joints2.row(j).transpose() - expect).norm() < 1e-10);
      }
    }
  }
}

TEST_CASE("fk position jacobian matches finite differences") {
  const Skeleton skel = make_default_skeleton();
  BodyShape shape;
  shape.beta.setRandom();
  shape.beta *= 0.3;
  const WholeBodyPose pose = random_pose(0.4);
  const FkResult fk = forward_kinematics_full(pose, shape, skel);
  const Eigen::MatrixXd jac = fk_position_jacobian(pose, shape, skel, fk);

  const double h = 1e-6;
  std::uniform_int_distribution<int> coord(0, kPoseDim - 1);
  for (int trial = 0; trial < 40; ++trial) {
    const int i = coord(rng);
    Eigen::VectorXd vp = pose.flatten(), vm = pose.flatten();
    vp[i] += h;
    vm[i] -= h;
    const auto jp = forward_kinematics(WholeBodyPose::unflatten(vp), shape, skel);
    const auto jm = forward_kinematics(WholeBodyPose::unflatten(vm), shape, skel);
    for (int j = 0; j < skel.joint_count(); ++j) {
      for (int c = 0; c < 3; ++c) {
        const double fd = (jp(j, c) - jm(j, c)) / (2 * h);
        CHECK(std::abs(jac(3 * j + c, i) - fd) < 1e-6 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST_CASE("projection examples") {
  CameraState cam;  // K = [[1,0,0],[0,1,0]], identity extrinsics
  CHECK((project_perspective(cam, Vec3(0, 0, 1)) - Vec2(0, 0)).norm() < 1e-15);
  CHECK((project_perspective(cam, Vec3(2, 4, 2)) - Vec2(1, 2)).norm() < 1e-15);
  CHECK_THROWS_AS(project_perspective(cam, Vec3(0, 0, -1)), DegenerateError);
  CHECK_THROWS_AS(project_perspective(cam, Vec3(1, 1, 0)), DegenerateError);
}

TEST_CASE("backproject examples and inverse property") {
  CameraState cam;
  CHECK((backproject(cam, Vec2(0, 0), 1.0) - Vec3(0, 0, 1)).norm() < 1e-15);
  CHECK_THROWS_AS(backproject(cam, Vec2(0, 0), 0.0), ValidationError);
  CHECK_THROWS_AS(backproject(cam, Vec2(0, 0), -2.0), ValidationError);

  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::uniform_real_distribution<double> dd(0.05, 4.0);
  for (int trial = 0; trial < 100; ++trial) {
    CameraState rcam = CameraState::pinhole(500 + 100 * d(rng), 480 + 100 * d(rng),
                                            320 + 10 * d(rng), 240 + 10 * d(rng));
    rcam.rotation = axis_angle_to_matrix(random_vec(0.4));
    rcam.translation = random_vec(0.5);
    rcam.scale = 0.5 + dd(rng);
    const Vec2 pix(320 + 200 * d(rng), 240 + 150 * d(rng));
    const double inv_depth = dd(rng);

    // round trip on pixels
    const Vec3 p = backproject(rcam, pix, inv_depth);
    CHECK((project_perspective(rcam, p) - pix).norm() < 1e-10);

    // ray-consistency oracle: the backprojected point lies on the explicit
    // camera ray at depth 1/inv_depth
    const Vec3 origin = backproject(rcam, pix, 1e6);  // near the camera center
    const Vec3 far = backproject(rcam, pix, 1e-3);
    const Vec3 dir = (far - origin).normalized();
    const double off_ray = ((p - origin) - (p - origin).dot(dir) * dir).norm();
    CHECK(off_ray < 1e-6);
  }
}

TEST_CASE("temporal std examples") {
  const Skeleton skel = make_default_skeleton();
  const BodyShape shape;

  MotionSequence seq;
  seq.fps = 30;
  for (int t = 0; t < 5; ++t) seq.frames.push_back({WholeBodyPose{}, {}, {}});
  CHECK(compute_temporal_std(seq, skel, shape, BodyPart::Body, StdRepresentation::Parameters) ==
        doctest::Approx(0.0));
  CHECK(compute_temporal_std(seq, skel, shape, BodyPart::Hand, StdRepresentation::Joints) ==
        doctest::Approx(0.0));

  // one channel toggling 0/1 over two frames: population std 0.5, averaged
  MotionSequence two;
  two.frames.resize(2);
  two.frames[1].pose.theta_body(0, 0) = 1.0;
  const double expect = 0.5 / (3.0 * kBodyRotations);
  CHECK(compute_temporal_std(two, skel, shape, BodyPart::Body, StdRepresentation::Parameters) ==
        doctest::Approx(expect).epsilon(1e-12));

  MotionSequence single;
  single.frames.resize(1);
  CHECK_THROWS_AS(
      compute_temporal_std(single, skel, shape, BodyPart::Body, StdRepresentation::Parameters),
      ValidationError);
}

TEST_CASE("temporal std matches two-pass oracle") {
  const Skeleton skel = make_default_skeleton();
  const BodyShape shape;
  MotionSequence seq;
  for (int t = 0; t < 100; ++t) {
    SequenceFrame f;
    f.pose = random_pose(0.3);
    seq.frames.push_back(f);
  }
  const double got =
      compute_temporal_std(seq, skel, shape, BodyPart::Hand, StdRepresentation::Parameters);

  // independent two-pass: mean, then variance, per channel
  const int dim = 3 * kHandRotations;
  double acc = 0.0;
  for (int ch = 0; ch < dim; ++ch) {
    double mean = 0.0;
    for (const auto& f : seq.frames) mean += f.pose.theta_hand(ch % 3, ch / 3);
    mean /= seq.length();
    double var = 0.0;
    for (const auto& f : seq.frames) {
      const double d = f.pose.theta_hand(ch % 3, ch / 3) - mean;
      var += d * d;
    }
    acc += std::sqrt(var / seq.length());
  }
  CHECK(std::abs(got - acc / dim) < 1e-12);
}

TEST_CASE("skeleton template file round trip") {
  const Skeleton skel = make_default_skeleton();
  const std::string path = "skeleton_roundtrip.json";
  save_skeleton(skel, path);
  const Skeleton back = load_skeleton(path);
  CHECK(back.id == skel.id);
  CHECK(back.joint_count() == skel.joint_count());
  CHECK(back.names == skel.names);
  CHECK(back.parent == skel.parent);
  CHECK(back.rot_index == skel.rot_index);
  CHECK((back.beta_scale - skel.beta_scale).norm() == 0.0);
  for (int j = 0; j < skel.joint_count(); ++j) {
    CHECK((back.rest_offset[j] - skel.rest_offset[j]).norm() == 0.0);
    CHECK(back.group[j] == skel.group[j]);
  }
}

TEST_CASE("default skeleton structure") {
  const Skeleton skel = make_default_skeleton();
  CHECK(skel.joint_count() == 63);
  int rotations = 0;
  for (int r : skel.rot_index) {
    if (r >= 0) ++rotations;
  }
  CHECK(rotations == kRotationCount);
  CHECK(skel.joints_in_group(JointGroup::Foot).size() == 4);
  // shape invariant: absurd beta rejected
  BodyShape bad;
  bad.beta.setConstant(-30.0);
  CHECK_THROWS_AS(skel.bone_scales(bad), ValidationError);
}

TEST_CASE("camera validation") {
  CameraState cam;
  cam.rotation(0, 0) = 2.0;
  CHECK_THROWS_AS(cam.validate(), ValidationError);
  CameraState cam2;
  cam2.scale = 0.0;
  CHECK_THROWS_AS(cam2.validate(), ValidationError);
}
