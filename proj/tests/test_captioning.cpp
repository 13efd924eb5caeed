#include <doctest.h>

#include <cstdio>
#include <random>

#include "mocap/captioning.hpp"
#include "mocap/errors.hpp"

using namespace mocap;

namespace {

std::mt19937 rng(24680);

Vec3 random_vec(std::mt19937& gen, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  return {d(gen), d(gen), d(gen)};
}

JointMatrix rest_joints(const Skeleton& skeleton) {
  return forward_kinematics(WholeBodyPose{}, BodyShape{}, skeleton);
}

// places the three index-finger keypoints so the wrist->tip / tip->root angle
// is exactly `degrees`
void set_finger_angle(JointMatrix& joints, const Skeleton& skeleton, double degrees) {
  const double rad = degrees * M_PI / 180.0;
  joints.row(skeleton.find_joint("left_wrist")) = Eigen::RowVector3d(0, 0, 0);
  joints.row(skeleton.find_joint("left_index_tip")) = Eigen::RowVector3d(1, 0, 0);
  joints.row(skeleton.find_joint("left_index1")) =
      Eigen::RowVector3d(1 + std::cos(rad), std::sin(rad), 0);
}

const PoseCode* find_code(const std::vector<PoseCode>& codes, const std::string& subject,
                          const std::string& relation, Side side) {
  for (const auto& c : codes) {
    if (c.subject == subject && c.relation == relation && c.side == side) return &c;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("bin classification is total and boundary-inclusive below") {
  const BinSpec curl = make_default_codebook().finger.curl;
  CHECK(curl.labels[curl.classify(180.0)] == "straight");
  CHECK(curl.labels[curl.classify(160.0)] == "slightly bent");
  CHECK(curl.labels[curl.classify(140.0)] == "slightly bent");
  CHECK(curl.labels[curl.classify(120.0)] == "bent");
  CHECK(curl.labels[curl.classify(60.0)] == "fully curled");
  CHECK(curl.labels[curl.classify(0.0)] == "fully curled");

  // every value maps to exactly one bin
  for (double v = -5; v <= 200; v += 0.5) {
    const int bin = curl.classify(v);
    CHECK(bin >= 0);
    CHECK(bin < static_cast<int>(curl.labels.size()));
  }

  BinSpec bad;
  bad.boundaries = {2.0, 1.0};
  bad.labels = {"a", "b", "c"};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("finger curl codes match the angle oracle") {
  const Skeleton skeleton = make_default_skeleton();
  JointMatrix joints = rest_joints(skeleton);
  const PoseCodebook book = make_default_codebook();

  set_finger_angle(joints, skeleton, 140.0);
  auto code = classify_finger_pose(joints, skeleton, Side::Left, 1, book.finger);
  REQUIRE(code.has_value());
  CHECK(code->bin == "slightly bent");
  CHECK(code->side == Side::Left);
  CHECK(!code->neutral);

  set_finger_angle(joints, skeleton, 180.0);
  code = classify_finger_pose(joints, skeleton, Side::Left, 1, book.finger);
  REQUIRE(code.has_value());
  CHECK(code->bin == "straight");
  CHECK(code->neutral);

  // randomized keypoints: emitted bin equals a direct recomputation
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 wrist = random_vec(rng, 1.0);
    const Vec3 tip = wrist + random_vec(rng, 1.0) + Vec3(2, 0, 0);
    const Vec3 root = tip + random_vec(rng, 1.0) + Vec3(0, 2, 0);
    joints.row(skeleton.find_joint("left_wrist")) = wrist.transpose();
    joints.row(skeleton.find_joint("left_index_tip")) = tip.transpose();
    joints.row(skeleton.find_joint("left_index1")) = root.transpose();

    const Vec3 a = tip - wrist;
    const Vec3 b = root - tip;
    const double angle =
        std::acos(std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0)) * 180.0 / M_PI;
    std::string expected = "fully curled";
    if (angle > 160) {
      expected = "straight";
    } else if (angle > 120) {
      expected = "slightly bent";
    } else if (angle > 60) {
      expected = "bent";
    }
    code = classify_finger_pose(joints, skeleton, Side::Left, 1, book.finger);
    REQUIRE(code.has_value());
    CHECK(code->bin == expected);
  }
}

TEST_CASE("missing finger keypoints omit the code with a diagnostic") {
  Skeleton skeleton = make_default_skeleton();
  skeleton.names[skeleton.find_joint("left_index_tip")] = "left_index_absent";
  const JointMatrix joints = rest_joints(skeleton);
  const PoseCodebook book = make_default_codebook();

  std::vector<std::string> diagnostics;
  const auto code =
      classify_finger_pose(joints, skeleton, Side::Left, 1, book.finger, &diagnostics);
  CHECK(!code.has_value());
  REQUIRE(diagnostics.size() == 1);
  CHECK(diagnostics[0].find("left_index") != std::string::npos);

  // the remaining fingers still produce codes
  diagnostics.clear();
  const auto codes = hand_posecodes(joints, skeleton, Side::Left, book.finger, &diagnostics);
  CHECK(codes.size() == 4 + 2);  // 4 curls; thumb/index and index/middle spreads dropped
  CHECK(diagnostics.size() == 3);
}

TEST_CASE("rest pose produces the canonical body codes") {
  const Skeleton skeleton = make_default_skeleton();
  const JointMatrix joints = rest_joints(skeleton);
  const auto codes = body_posecodes(joints, skeleton, make_default_codebook().body);

  for (const Side side : {Side::Left, Side::Right}) {
    CHECK(find_code(codes, "knee", "bend", side)->bin == "straight");
    CHECK(find_code(codes, "elbow", "bend", side)->bin == "straight");
    CHECK(find_code(codes, "hand", "height", side)->bin == "at shoulder height");
  }
  CHECK(find_code(codes, "hands", "separation", Side::None)->bin == "wide apart");
}

TEST_CASE("flexed knee lands in the codebook bin of its interior angle") {
  const Skeleton skeleton = make_default_skeleton();
  JointMatrix joints = rest_joints(skeleton);
  const int hip = skeleton.find_joint("left_hip");
  const int knee = skeleton.find_joint("left_knee");
  const int ankle = skeleton.find_joint("left_ankle");

  const Vec3 thigh = (joints.row(hip) - joints.row(knee)).transpose();
  const double rad = 30.0 * M_PI / 180.0;
  // shank folded to a 30-degree interior angle, in the x-y plane
  const Vec3 shank =
      std::cos(rad) * thigh + std::sin(rad) * thigh.norm() * Vec3::UnitX();
  joints.row(ankle) = joints.row(knee) + shank.transpose() * 0.42 / shank.norm();

  const auto codes = body_posecodes(joints, skeleton, make_default_codebook().body);
  CHECK(find_code(codes, "knee", "bend", Side::Left)->bin == "completely bent");
  CHECK(find_code(codes, "knee", "bend", Side::Right)->bin == "straight");
}

TEST_CASE("codes are invariant under rigid transforms") {
  const Skeleton skeleton = make_default_skeleton();
  const PoseCodebook book = make_default_codebook();
  WholeBodyPose pose;
  std::uniform_real_distribution<double> d(-0.3, 0.3);
  for (int r = 0; r < kBodyRotations; ++r) pose.theta_body.col(r) = random_vec(rng, 0.3);
  for (int r = 0; r < kHandRotations; ++r) pose.theta_hand.col(r) = random_vec(rng, 0.3);
  const JointMatrix joints = forward_kinematics(pose, BodyShape{}, skeleton);

  const Mat3 q = axis_angle_to_matrix(Vec3(0.7, -1.1, 0.4));
  const Vec3 shift(3, -2, 5);
  JointMatrix moved = joints * q.transpose();
  moved.rowwise() += shift.transpose();

  CHECK(body_posecodes(joints, skeleton, book.body) ==
        body_posecodes(moved, skeleton, book.body));
  CHECK(hand_posecodes(joints, skeleton, Side::Left, book.finger) ==
        hand_posecodes(moved, skeleton, Side::Left, book.finger));
}

TEST_CASE("aggregation merges sides, drops neutral codes, orders regions") {
  PoseCode left{"knee", "bend", "bent", Side::Left, BodyRegion::Body, false};
  PoseCode right = left;
  right.side = Side::Right;
  PoseCode neutral{"elbow", "bend", "straight", Side::Left, BodyRegion::Body, true};
  PoseCode curl{"index finger", "curl", "fully curled", Side::Left, BodyRegion::Hand, false};

  SUBCASE("identical left/right collapse to both") {
    const auto agg = aggregate_codes({left, right});
    REQUIRE(agg.size() == 1);
    CHECK(agg[0].side == Side::Both);
    CHECK(agg[0].bin == "bent");
  }
  SUBCASE("all-neutral input aggregates to nothing") {
    PoseCode n2 = neutral;
    n2.side = Side::Right;
    CHECK(aggregate_codes({neutral, n2}).empty());
  }
  SUBCASE("hand codes sort after body codes") {
    const auto agg = aggregate_codes({curl, left, neutral, right});
    REQUIRE(agg.size() == 2);
    CHECK(agg[0].region == BodyRegion::Body);
    CHECK(agg[1].region == BodyRegion::Hand);
  }
  SUBCASE("random multisets match a rule replay") {
    const std::vector<std::string> bins = {"a", "b", "c"};
    std::uniform_int_distribution<int> coin(0, 1);
    std::uniform_int_distribution<int> pick(0, 2);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<PoseCode> codes;
      const int count = 2 + pick(rng);
      for (int i = 0; i < count; ++i) {
        codes.push_back({coin(rng) ? "knee" : "finger", coin(rng) ? "bend" : "curl",
                         bins[pick(rng)], coin(rng) ? Side::Left : Side::Right,
                         coin(rng) ? BodyRegion::Body : BodyRegion::Hand,
                         coin(rng) == 1});
      }
      // replay: drop neutrals, first-match left/right merge, stable region sort
      std::vector<PoseCode> kept;
      for (const auto& c : codes) {
        if (!c.neutral) kept.push_back(c);
      }
      std::vector<PoseCode> expected;
      std::vector<bool> used(kept.size(), false);
      for (size_t i = 0; i < kept.size(); ++i) {
        if (used[i]) continue;
        PoseCode c = kept[i];
        const Side other = c.side == Side::Left ? Side::Right : Side::Left;
        for (size_t j = i + 1; j < kept.size(); ++j) {
          if (!used[j] && kept[j].side == other && kept[j].subject == c.subject &&
              kept[j].relation == c.relation && kept[j].bin == c.bin) {
            c.side = Side::Both;
            used[j] = true;
            break;
          }
        }
        expected.push_back(c);
      }
      std::stable_sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
        return static_cast<int>(a.region) < static_cast<int>(b.region);
      });
      CHECK(aggregate_codes(codes) == expected);
    }
  }
}

TEST_CASE("rendering is deterministic and traceable") {
  const CaptionTemplates templates = make_default_templates();

  SUBCASE("empty aggregate with an emotion yields one facial sentence") {
    const Description d = render_description({}, std::string("happy"), templates, 7);
    REQUIRE(d.sentences.size() == 1);
    CHECK(d.sentences[0].find("happy") != std::string::npos);
    REQUIRE(d.provenance.size() == 1);
    CHECK(d.provenance[0][0].relation == "emotion");
  }
  SUBCASE("a single code renders exactly its relation") {
    PoseCode code{"knee", "bend", "completely bent", Side::Both, BodyRegion::Body, false};
    const Description d = render_description({code}, std::nullopt, templates, 7);
    REQUIRE(d.sentences.size() == 1);
    CHECK(d.sentences[0].find("completely bent") != std::string::npos);
    CHECK(d.sentences[0].find("oth knees") != std::string::npos);
    CHECK(d.provenance[0] == std::vector<PoseCode>{code});
  }
  SUBCASE("fixed seed replays byte-identical output") {
    const Skeleton skeleton = make_default_skeleton();
    WholeBodyPose pose;
    pose.theta_body(0, 7) = 1.4;  // bend the left knee
    const JointMatrix joints = forward_kinematics(pose, BodyShape{}, skeleton);
    const PoseCodebook book = make_default_codebook();
    const Description a = describe_frame(joints, skeleton, book, templates, "calm", 123);
    const Description b = describe_frame(joints, skeleton, book, templates, "calm", 123);
    CHECK(a.sentences == b.sentences);
    CHECK(!a.sentences.empty());
    for (size_t i = 0; i < a.sentences.size(); ++i) {
      CHECK(!a.provenance[i].empty());  // every sentence has provenance
    }
  }
  SUBCASE("unknown relation is rejected") {
    PoseCode code{"knee", "warp", "x", Side::None, BodyRegion::Body, false};
    CHECK_THROWS_AS(render_description({code}, std::nullopt, templates, 0), ValidationError);
  }
}

TEST_CASE("codebook and template files round-trip") {
  const PoseCodebook book = make_default_codebook();
  const std::string book_path = "test_codebook.json";
  save_codebook(book, book_path);
  const PoseCodebook loaded = load_codebook(book_path);
  CHECK(loaded.body.bend.boundaries == book.body.bend.boundaries);
  CHECK(loaded.body.separation.labels == book.body.separation.labels);
  CHECK(loaded.finger.curl.boundaries == book.finger.curl.boundaries);
  CHECK(loaded.finger.spread_cutoff == book.finger.spread_cutoff);
  std::remove(book_path.c_str());

  const CaptionTemplates templates = make_default_templates();
  const std::string tmpl_path = "test_templates.json";
  save_templates(templates, tmpl_path);
  const CaptionTemplates tloaded = load_templates(tmpl_path);
  CHECK(tloaded.variants == templates.variants);
  std::remove(tmpl_path.c_str());

  CHECK_THROWS_AS(load_codebook("does_not_exist.json"), ValidationError);
}
