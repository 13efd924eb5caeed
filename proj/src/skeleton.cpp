#include "mocap/skeleton.hpp"

#include <fstream>
#include <json.hpp>

#include "mocap/errors.hpp"

namespace mocap {

namespace {

const char* group_name(JointGroup g) {
  switch (g) {
    case JointGroup::Body: return "body";
    case JointGroup::Hand: return "hand";
    case JointGroup::Face: return "face";
    case JointGroup::Foot: return "foot";
  }
  return "body";
}

JointGroup group_from_name(const std::string& s) {
  if (s == "body") return JointGroup::Body;
  if (s == "hand") return JointGroup::Hand;
  if (s == "face") return JointGroup::Face;
  if (s == "foot") return JointGroup::Foot;
  throw ValidationError("unknown joint group: " + s);
}

}  // namespace

Eigen::VectorXd Skeleton::bone_scales(const BodyShape& shape) const {
  Eigen::VectorXd s = Eigen::VectorXd::Ones(joint_count());
  s += beta_scale.transpose() * shape.beta;
  for (int j = 0; j < joint_count(); ++j) {
    if (s[j] <= 0.0) {
      throw ValidationError("shape produces non-positive bone scale at joint " + names[j]);
    }
  }
  return s;
}

std::vector<int> Skeleton::joints_in_group(JointGroup g) const {
  std::vector<int> out;
  for (int j = 0; j < joint_count(); ++j) {
    if (group[j] == g) out.push_back(j);
  }
  return out;
}

void Skeleton::validate() const {
  const size_t n = parent.size();
  if (n == 0) throw ValidationError("skeleton has no joints");
  if (names.size() != n || rest_offset.size() != n || rot_index.size() != n ||
      group.size() != n) {
    throw ValidationError("skeleton field sizes inconsistent");
  }
  if (beta_scale.rows() != kShapeDim || beta_scale.cols() != static_cast<int>(n)) {
    throw ValidationError("beta_scale must be 10 x joint_count");
  }
  int roots = 0;
  for (size_t j = 0; j < n; ++j) {
    if (parent[j] < 0) {
      ++roots;
    } else if (parent[j] >= static_cast<int>(j)) {
      // topological order: parents precede children
      throw ValidationError("skeleton joints must be in topological order");
    }
    if (rot_index[j] >= kRotationCount) {
      throw ValidationError("rotation index out of range");
    }
  }
  if (roots != 1) throw ValidationError("skeleton must have exactly one root");
}

int Skeleton::find_joint(const std::string& name) const {
  for (int j = 0; j < joint_count(); ++j) {
    if (names[j] == name) return j;
  }
  return -1;
}

Skeleton make_default_skeleton() {
  Skeleton s;
  s.id = "wholebody63-v1";
  s.version = 1;

  auto add = [&s](const std::string& name, int par, Vec3 off, int rot, JointGroup g) {
    s.names.push_back(name);
    s.parent.push_back(par);
    s.rest_offset.push_back(off);
    s.rot_index.push_back(rot);
    s.group.push_back(g);
    return static_cast<int>(s.names.size()) - 1;
  };

  const auto B = JointGroup::Body;
  const auto H = JointGroup::Hand;
  const auto F = JointGroup::Face;
  const auto Ft = JointGroup::Foot;

  // torso / head (body rotations 0..5)
  const int pelvis = add("pelvis", -1, {0, 0, 0}, 0, B);
  const int spine1 = add("spine1", pelvis, {0, 0.12, 0}, 1, B);
  const int spine2 = add("spine2", spine1, {0, 0.13, 0}, 2, B);
  const int spine3 = add("spine3", spine2, {0, 0.13, 0}, 3, B);
  const int neck = add("neck", spine3, {0, 0.12, 0}, 4, B);
  const int head = add("head", neck, {0, 0.10, 0}, 5, B);

  // legs (6..13)
  const int lhip = add("left_hip", pelvis, {0.09, -0.06, 0}, 6, B);
  const int lknee = add("left_knee", lhip, {0, -0.40, 0}, 7, B);
  const int lankle = add("left_ankle", lknee, {0, -0.42, 0}, 8, Ft);
  add("left_toe", lankle, {0, -0.06, 0.14}, 9, Ft);
  const int rhip = add("right_hip", pelvis, {-0.09, -0.06, 0}, 10, B);
  const int rknee = add("right_knee", rhip, {0, -0.40, 0}, 11, B);
  const int rankle = add("right_ankle", rknee, {0, -0.42, 0}, 12, Ft);
  add("right_toe", rankle, {0, -0.06, 0.14}, 13, Ft);

  // arms (14..21)
  const int lcollar = add("left_collar", spine3, {0.06, 0.08, 0}, 14, B);
  const int lshoulder = add("left_shoulder", lcollar, {0.11, 0.02, 0}, 15, B);
  const int lelbow = add("left_elbow", lshoulder, {0.26, 0, 0}, 16, B);
  const int lwrist = add("left_wrist", lelbow, {0.25, 0, 0}, 17, B);
  const int rcollar = add("right_collar", spine3, {-0.06, 0.08, 0}, 18, B);
  const int rshoulder = add("right_shoulder", rcollar, {-0.11, 0.02, 0}, 19, B);
  const int relbow = add("right_elbow", rshoulder, {-0.26, 0, 0}, 20, B);
  const int rwrist = add("right_wrist", relbow, {-0.25, 0, 0}, 21, B);

  // jaw (rotation index 52)
  add("jaw", head, {0, -0.02, 0.05}, kBodyRotations + kHandRotations, F);

  // fingers: 3 rotating segments per finger + tip marker
  struct FingerSpec {
    const char* name;
    double spread;  // z offset of the finger root
    double root_x;
    double seg;
  };
  const FingerSpec fingers[5] = {
      {"thumb", 0.035, 0.025, 0.030},
      {"index", 0.022, 0.085, 0.028},
      {"middle", 0.0, 0.090, 0.030},
      {"ring", -0.022, 0.085, 0.028},
      {"pinky", -0.042, 0.075, 0.022},
  };
  for (int side = 0; side < 2; ++side) {
    const bool left = side == 0;
    const int wrist = left ? lwrist : rwrist;
    const double sx = left ? 1.0 : -1.0;
    const std::string prefix = left ? "left_" : "right_";
    int rot = kBodyRotations + side * 15;
    for (const auto& f : fingers) {
      int par = wrist;
      for (int seg = 1; seg <= 3; ++seg) {
        const Vec3 off = seg == 1 ? Vec3(sx * f.root_x, 0, f.spread)
                                  : Vec3(sx * f.seg, 0, 0);
        par = add(prefix + f.name + std::to_string(seg), par, off, rot++, H);
      }
    }
  }
  // fingertip markers, appended after all rotating joints
  for (int side = 0; side < 2; ++side) {
    const bool left = side == 0;
    const double sx = left ? 1.0 : -1.0;
    const std::string prefix = left ? "left_" : "right_";
    for (const auto& f : fingers) {
      const int par = s.find_joint(prefix + f.name + "3");
      add(prefix + f.name + "_tip", par, Vec3(sx * f.seg, 0, 0), -1, H);
    }
  }

  // beta -> bone-scale rows: 0 overall size, 1 legs, 2 arms, 3 torso,
  // 4 hands, 5 head/neck, 6..9 mild mixed terms.
  const int n = s.joint_count();
  s.beta_scale = Eigen::MatrixXd::Zero(kShapeDim, n);
  for (int j = 0; j < n; ++j) {
    s.beta_scale(0, j) = 0.05;
    const std::string& nm = s.names[j];
    const bool leg = nm.find("hip") != std::string::npos || nm.find("knee") != std::string::npos ||
                     nm.find("ankle") != std::string::npos || nm.find("toe") != std::string::npos;
    const bool arm = nm.find("collar") != std::string::npos ||
                     nm.find("shoulder") != std::string::npos ||
                     nm.find("elbow") != std::string::npos || nm.find("wrist") != std::string::npos;
    const bool torso = nm.find("spine") != std::string::npos || nm == "pelvis";
    const bool hand = s.group[j] == JointGroup::Hand;
    const bool headj = nm == "neck" || nm == "head" || nm == "jaw";
    if (leg) s.beta_scale(1, j) = 0.04;
    if (arm) s.beta_scale(2, j) = 0.04;
    if (torso) s.beta_scale(3, j) = 0.03;
    if (hand) s.beta_scale(4, j) = 0.04;
    if (headj) s.beta_scale(5, j) = 0.02;
    s.beta_scale(6, j) = leg ? 0.01 : 0.0;
    s.beta_scale(7, j) = arm ? 0.01 : 0.0;
    s.beta_scale(8, j) = hand ? 0.01 : 0.0;
    s.beta_scale(9, j) = torso ? 0.01 : 0.0;
  }

  s.validate();
  return s;
}

Skeleton load_skeleton(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open skeleton file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("skeleton file parse error: " + std::string(e.what()));
  }
  Skeleton s;
  try {
    if (j.at("schema") != "mocap-skeleton") {
      throw ValidationError("not a skeleton template file");
    }
    s.version = j.at("version").get<int>();
    s.id = j.at("id").get<std::string>();
    for (const auto& joint : j.at("joints")) {
      s.names.push_back(joint.at("name").get<std::string>());
      s.parent.push_back(joint.at("parent").get<int>());
      const auto& off = joint.at("offset");
      s.rest_offset.emplace_back(off.at(0).get<double>(), off.at(1).get<double>(),
                                 off.at(2).get<double>());
      s.rot_index.push_back(joint.at("rot").get<int>());
      s.group.push_back(group_from_name(joint.at("group").get<std::string>()));
    }
    const auto& rows = j.at("beta_scale");
    if (rows.size() != kShapeDim) throw ValidationError("beta_scale needs 10 rows");
    s.beta_scale.resize(kShapeDim, static_cast<int>(s.names.size()));
    for (int r = 0; r < kShapeDim; ++r) {
      const auto& row = rows.at(r);
      if (static_cast<int>(row.size()) != s.joint_count()) {
        throw ValidationError("beta_scale row length mismatch");
      }
      for (int c = 0; c < s.joint_count(); ++c) s.beta_scale(r, c) = row.at(c).get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("skeleton file schema error: " + std::string(e.what()));
  }
  s.validate();
  return s;
}

void save_skeleton(const Skeleton& skel, const std::string& path) {
  nlohmann::json j;
  j["schema"] = "mocap-skeleton";
  j["version"] = skel.version;
  j["id"] = skel.id;
  j["joints"] = nlohmann::json::array();
  for (int i = 0; i < skel.joint_count(); ++i) {
    j["joints"].push_back({{"name", skel.names[i]},
                           {"parent", skel.parent[i]},
                           {"offset", {skel.rest_offset[i].x(), skel.rest_offset[i].y(),
                                       skel.rest_offset[i].z()}},
                           {"rot", skel.rot_index[i]},
                           {"group", group_name(skel.group[i])}});
  }
  j["beta_scale"] = nlohmann::json::array();
  for (int r = 0; r < kShapeDim; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < skel.joint_count(); ++c) row.push_back(skel.beta_scale(r, c));
    j["beta_scale"].push_back(row);
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write skeleton file: " + path);
  out << j.dump(1) << "\n";
}

}  // namespace mocap
