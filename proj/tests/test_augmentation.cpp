#include <doctest.h>

#include <random>

#include "mocap/augmentation.hpp"
#include "mocap/errors.hpp"

using namespace mocap;

namespace {

std::mt19937 rng(1357);

WholeBodyPose random_pose(std::mt19937& gen) {
  std::uniform_real_distribution<double> d(-0.5, 0.5);
  WholeBodyPose pose;
  pose.global_orient = Vec3(d(gen), d(gen), d(gen));
  pose.root_translation = Vec3(d(gen), d(gen), d(gen));
  for (int r = 0; r < kBodyRotations; ++r) {
    pose.theta_body.col(r) = Vec3(d(gen), d(gen), d(gen));
  }
  for (int r = 0; r < kHandRotations; ++r) {
    pose.theta_hand.col(r) = Vec3(d(gen), d(gen), d(gen));
  }
  pose.theta_jaw = Vec3(d(gen), d(gen), d(gen));
  for (int i = 0; i < kExpressionDim; ++i) pose.expression[i] = d(gen);
  return pose;
}

MotionSequence random_sequence(std::mt19937& gen, int frames) {
  MotionSequence seq;
  seq.subject_id = "synthetic";
  for (int t = 0; t < frames; ++t) {
    SequenceFrame frame;
    frame.pose = random_pose(gen);
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

PoseSequence poses_of(const MotionSequence& seq) {
  PoseSequence out;
  for (const auto& frame : seq.frames) out.push_back(frame.pose);
  return out;
}

}  // namespace

TEST_CASE("lower-body rotation set covers exactly the leg chains") {
  const Skeleton skeleton = make_default_skeleton();
  const auto lower = lower_body_rotations(skeleton);
  // hips, knees, ankles, toes on both sides
  CHECK(lower == std::vector<int>{6, 7, 8, 9, 10, 11, 12, 13});
}

TEST_CASE("pose resampling is linear per channel") {
  WholeBodyPose a;  // zeros
  WholeBodyPose b;
  b.expression.setOnes();
  b.theta_body.col(3).setConstant(2.0);

  const PoseSequence out = resample_poses({a, b}, 5);
  REQUIRE(out.size() == 5);
  const double expected[5] = {0.0, 0.25, 0.5, 0.75, 1.0};
  for (int i = 0; i < 5; ++i) {
    CHECK(out[i].expression[0] == doctest::Approx(expected[i]).epsilon(1e-12));
    CHECK(out[i].theta_body(0, 3) == doctest::Approx(2 * expected[i]).epsilon(1e-12));
  }
  // endpoints exact
  CHECK((out.front().flatten() - a.flatten()).norm() == 0.0);
  CHECK((out.back().flatten() - b.flatten()).norm() == 0.0);

  // identity at matching length
  const PoseSequence same = resample_poses({a, b}, 2);
  CHECK((same[0].flatten() - a.flatten()).norm() == 0.0);
  CHECK((same[1].flatten() - b.flatten()).norm() == 0.0);
}

TEST_CASE("lower-body augmentation: self-match returns the input") {
  const Skeleton skeleton = make_default_skeleton();
  const MotionSequence seq = random_sequence(rng, 6);
  MotionLibrary library;
  library.entries.push_back({poses_of(random_sequence(rng, 6)), "walking"});
  library.entries.push_back({poses_of(seq), "standing"});
  library.entries.push_back({poses_of(random_sequence(rng, 9)), "sitting"});

  const auto result = augment_lower_body(seq, library, skeleton);
  CHECK(result.entry_index == 1);
  CHECK(result.keyword == "standing");
  for (int t = 0; t < seq.length(); ++t) {
    CHECK((result.sequence.frames[t].pose.flatten() - seq.frames[t].pose.flatten()).norm() ==
          0.0);
  }
}

TEST_CASE("lower-body augmentation: forced choice and exact channel split") {
  const Skeleton skeleton = make_default_skeleton();
  const auto lower = lower_body_rotations(skeleton);
  const MotionSequence seq = random_sequence(rng, 5);
  MotionLibrary library;
  library.entries.push_back({poses_of(random_sequence(rng, 5)), "jumping"});

  const auto result = augment_lower_body(seq, library, skeleton);
  CHECK(result.entry_index == 0);
  CHECK(result.keyword == "jumping");
  for (int t = 0; t < 5; ++t) {
    const WholeBodyPose& in = seq.frames[t].pose;
    const WholeBodyPose& out = result.sequence.frames[t].pose;
    const WholeBodyPose& lib = library.entries[0].poses[t];
    for (int r = 0; r < kBodyRotations; ++r) {
      const bool is_lower = std::find(lower.begin(), lower.end(), r) != lower.end();
      const auto& expected = is_lower ? lib.theta_body.col(r) : in.theta_body.col(r);
      CHECK((out.theta_body.col(r) - expected).norm() == 0.0);
    }
    CHECK((out.global_orient - in.global_orient).norm() == 0.0);
    CHECK((out.root_translation - in.root_translation).norm() == 0.0);
    CHECK((out.theta_hand - in.theta_hand).norm() == 0.0);
    CHECK((out.expression - in.expression).norm() == 0.0);
  }
}

TEST_CASE("lower-body augmentation matches a brute-force nearest neighbor") {
  const Skeleton skeleton = make_default_skeleton();
  const auto lower = lower_body_rotations(skeleton);
  for (int trial = 0; trial < 10; ++trial) {
    const MotionSequence seq = random_sequence(rng, 7);
    MotionLibrary library;
    std::uniform_int_distribution<int> len(3, 12);
    for (int e = 0; e < 6; ++e) {
      library.entries.push_back({poses_of(random_sequence(rng, len(rng))), "kw"});
    }

    int expected = -1;
    double best = 1e300;
    for (size_t e = 0; e < library.entries.size(); ++e) {
      const PoseSequence resampled = resample_poses(library.entries[e].poses, seq.length());
      double distance = 0;
      for (int t = 0; t < seq.length(); ++t) {
        const Eigen::VectorXd da = seq.frames[t].pose.flatten();
        const Eigen::VectorXd db = resampled[t].flatten();
        double sq = (da.head<3>() - db.head<3>()).squaredNorm();
        for (int r = 0; r < kRotationCount; ++r) {
          if (std::find(lower.begin(), lower.end(), r) != lower.end()) continue;
          sq += (da.segment<3>(6 + 3 * r) - db.segment<3>(6 + 3 * r)).squaredNorm();
        }
        distance += std::sqrt(sq);
      }
      distance /= seq.length();
      if (distance < best) {
        best = distance;
        expected = static_cast<int>(e);
      }
    }
    CHECK(augment_lower_body(seq, library, skeleton).entry_index == expected);
  }
}

TEST_CASE("lower-body augmentation rejects an empty library") {
  const Skeleton skeleton = make_default_skeleton();
  const MotionSequence seq = random_sequence(rng, 3);
  CHECK_THROWS_AS(augment_lower_body(seq, MotionLibrary{}, skeleton), ValidationError);
}

TEST_CASE("face augmentation installs and interpolates expressions") {
  const MotionSequence seq = random_sequence(rng, 5);

  FaceLibraryEntry ramp;
  ramp.emotion = "surprised";
  ramp.expression.push_back(Eigen::Matrix<double, kExpressionDim, 1>::Zero());
  ramp.expression.push_back(Eigen::Matrix<double, kExpressionDim, 1>::Ones());
  ramp.jaw = {Vec3::Zero(), Vec3(1, 0, 0)};
  FaceLibrary library;
  library.entries.push_back(ramp);

  const auto result = augment_face(seq, library, 42);
  CHECK(result.entry_index == 0);
  CHECK(result.emotion == "surprised");
  const double expected[5] = {0.0, 0.25, 0.5, 0.75, 1.0};
  for (int t = 0; t < 5; ++t) {
    const WholeBodyPose& out = result.sequence.frames[t].pose;
    CHECK(out.expression[7] == doctest::Approx(expected[t]).epsilon(1e-12));
    CHECK(out.theta_jaw[0] == doctest::Approx(expected[t]).epsilon(1e-12));
    // endpoints exact
    if (t == 0 || t == 4) CHECK(out.expression[0] == expected[t]);
    // body and hands untouched
    const WholeBodyPose& in = seq.frames[t].pose;
    CHECK((out.theta_body - in.theta_body).norm() == 0.0);
    CHECK((out.theta_hand - in.theta_hand).norm() == 0.0);
    CHECK((out.global_orient - in.global_orient).norm() == 0.0);
    CHECK((out.root_translation - in.root_translation).norm() == 0.0);
  }
}

TEST_CASE("face augmentation at matching length installs verbatim") {
  const MotionSequence seq = random_sequence(rng, 3);
  FaceLibraryEntry entry;
  entry.emotion = "calm";
  for (int t = 0; t < 3; ++t) {
    entry.expression.push_back(Eigen::Matrix<double, kExpressionDim, 1>::Random());
    entry.jaw.push_back(Vec3::Random());
  }
  FaceLibrary library;
  library.entries.push_back(entry);

  const auto result = augment_face(seq, library, 7);
  for (int t = 0; t < 3; ++t) {
    CHECK((result.sequence.frames[t].pose.expression - entry.expression[t]).norm() == 0.0);
    CHECK((result.sequence.frames[t].pose.theta_jaw - entry.jaw[t]).norm() == 0.0);
  }
}

TEST_CASE("face augmentation selection is seeded and deterministic") {
  const MotionSequence seq = random_sequence(rng, 4);
  FaceLibrary library;
  for (int e = 0; e < 8; ++e) {
    FaceLibraryEntry entry;
    entry.emotion = "emotion" + std::to_string(e);
    entry.expression.assign(2, Eigen::Matrix<double, kExpressionDim, 1>::Constant(e));
    entry.jaw.assign(2, Vec3::Zero());
    library.entries.push_back(std::move(entry));
  }

  const auto a = augment_face(seq, library, 99);
  const auto b = augment_face(seq, library, 99);
  CHECK(a.entry_index == b.entry_index);
  CHECK(a.emotion == b.emotion);

  // some other seed eventually picks a different entry
  bool differs = false;
  for (std::uint64_t seed = 0; seed < 32 && !differs; ++seed) {
    differs = augment_face(seq, library, seed).entry_index != a.entry_index;
  }
  CHECK(differs);

  CHECK_THROWS_AS(augment_face(seq, FaceLibrary{}, 0), ValidationError);
}
