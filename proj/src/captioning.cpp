#include "mocap/captioning.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "mocap/errors.hpp"

namespace mocap {

void BinSpec::validate() const {
  if (labels.size() != boundaries.size() + 1) {
    throw ValidationError("bin spec: need one more label than boundary");
  }
  if (!std::is_sorted(boundaries.begin(), boundaries.end())) {
    throw ValidationError("bin spec: boundaries must be sorted");
  }
  if (neutral_bin >= static_cast<int>(labels.size())) {
    throw ValidationError("bin spec: neutral bin out of range");
  }
}

int BinSpec::classify(double value) const {
  validate();
  for (size_t i = 0; i < boundaries.size(); ++i) {
    if (value <= boundaries[i]) return static_cast<int>(i);
  }
  return static_cast<int>(labels.size()) - 1;
}

void FingerPoseCodebook::validate() const {
  curl.validate();
  if (!(spread_cutoff > 0)) throw ValidationError("finger codebook: cutoff must be positive");
}

void BodyCodebook::validate() const {
  bend.validate();
  height.validate();
  depth.validate();
  separation.validate();
}

void PoseCodebook::validate() const {
  body.validate();
  finger.validate();
}

PoseCodebook make_default_codebook() {
  PoseCodebook book;
  book.body.bend = {{70, 110, 150}, {"completely bent", "bent", "partially bent", "straight"}, 3};
  book.body.height = {{-0.15, 0.15},
                      {"below shoulder height", "at shoulder height", "raised above the shoulders"},
                      1};
  book.body.depth = {{-0.15, 0.15},
                     {"behind the torso", "beside the torso", "in front of the torso"},
                     1};
  book.body.separation = {{0.15, 0.45}, {"touching", "close together", "wide apart"}, 2};
  book.finger.curl = {{60, 120, 160}, {"fully curled", "bent", "slightly bent", "straight"}, 3};
  book.validate();
  return book;
}

namespace {

double degrees_between(const Vec3& a, const Vec3& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na < 1e-12 || nb < 1e-12) throw DegenerateError("zero-length limb segment");
  const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

std::string side_prefix(Side side) {
  return side == Side::Left ? "left_" : "right_";
}

Vec3 row(const JointMatrix& joints, int j) { return joints.row(j).transpose(); }

}  // namespace

std::optional<double> finger_curl_angle(const JointMatrix& joints, const Skeleton& skeleton,
                                        Side side, int finger) {
  if (finger < 0 || finger > 4) throw ValidationError("finger index out of range");
  if (side != Side::Left && side != Side::Right) {
    throw ValidationError("finger codes are per hand");
  }
  const std::string prefix = side_prefix(side);
  const int wrist = skeleton.find_joint(prefix + "wrist");
  const int tip = skeleton.find_joint(prefix + kFingerNames[finger] + std::string("_tip"));
  const int root = skeleton.find_joint(prefix + kFingerNames[finger] + std::string("1"));
  if (wrist < 0 || tip < 0 || root < 0) return std::nullopt;
  return degrees_between(row(joints, tip) - row(joints, wrist),
                         row(joints, root) - row(joints, tip));
}

std::optional<PoseCode> classify_finger_pose(const JointMatrix& joints, const Skeleton& skeleton,
                                             Side side, int finger,
                                             const FingerPoseCodebook& book,
                                             std::vector<std::string>* diagnostics) {
  const auto angle = finger_curl_angle(joints, skeleton, side, finger);
  if (!angle) {
    if (diagnostics) {
      diagnostics->push_back(std::string("missing keypoints for ") + side_prefix(side) +
                             kFingerNames[finger] + "; curl code omitted");
    }
    return std::nullopt;
  }
  const int bin = book.curl.classify(*angle);
  PoseCode code;
  code.subject = std::string(kFingerNames[finger]) + " finger";
  code.relation = "curl";
  code.bin = book.curl.labels[bin];
  code.side = side;
  code.region = BodyRegion::Hand;
  code.neutral = bin == book.curl.neutral_bin;
  return code;
}

std::vector<PoseCode> hand_posecodes(const JointMatrix& joints, const Skeleton& skeleton,
                                     Side side, const FingerPoseCodebook& book,
                                     std::vector<std::string>* diagnostics) {
  book.validate();
  std::vector<PoseCode> codes;
  for (int finger = 0; finger < 5; ++finger) {
    if (auto code = classify_finger_pose(joints, skeleton, side, finger, book, diagnostics)) {
      codes.push_back(std::move(*code));
    }
  }

  const std::string prefix = side_prefix(side);
  const int wrist = skeleton.find_joint(prefix + "wrist");
  const int middle_tip = skeleton.find_joint(prefix + "middle_tip");
  if (wrist < 0 || middle_tip < 0) {
    if (diagnostics) {
      diagnostics->push_back("missing hand frame for " + prefix + "hand; spread codes omitted");
    }
    return codes;
  }
  const double hand_length = (row(joints, middle_tip) - row(joints, wrist)).norm();
  if (hand_length < 1e-12) throw DegenerateError("degenerate hand length");

  for (int finger = 0; finger + 1 < 5; ++finger) {
    const int tip_a = skeleton.find_joint(prefix + kFingerNames[finger] + std::string("_tip"));
    const int tip_b = skeleton.find_joint(prefix + kFingerNames[finger + 1] + std::string("_tip"));
    if (tip_a < 0 || tip_b < 0) {
      if (diagnostics) {
        diagnostics->push_back(std::string("missing fingertip pair ") + kFingerNames[finger] +
                               "/" + kFingerNames[finger + 1] + "; spread code omitted");
      }
      continue;
    }
    const double gap = (row(joints, tip_a) - row(joints, tip_b)).norm() / hand_length;
    PoseCode code;
    code.subject = std::string(kFingerNames[finger]) + " and " + kFingerNames[finger + 1] +
                   " fingers";
    code.relation = "spread";
    code.bin = gap > book.spread_cutoff ? book.spread_label : book.together_label;
    code.side = side;
    code.region = BodyRegion::Hand;
    code.neutral = gap <= book.spread_cutoff;
    codes.push_back(std::move(code));
  }
  return codes;
}

std::vector<PoseCode> body_posecodes(const JointMatrix& joints, const Skeleton& skeleton,
                                     const BodyCodebook& book) {
  book.validate();
  const auto joint = [&](const std::string& name) {
    const int j = skeleton.find_joint(name);
    if (j < 0) throw ValidationError("body codes need joint: " + name);
    return row(joints, j);
  };

  // body-local frame from the hip line and the spine
  const Vec3 pelvis = joint("pelvis");
  Vec3 up = (joint("spine1") - pelvis).normalized();
  Vec3 lateral = joint("left_hip") - joint("right_hip");
  lateral = (lateral - lateral.dot(up) * up).normalized();
  const Vec3 forward = lateral.cross(up);

  std::vector<PoseCode> codes;
  const auto add = [&](std::string subject, std::string relation, const BinSpec& spec,
                       double value, Side side) {
    const int bin = spec.classify(value);
    codes.push_back({std::move(subject), std::move(relation), spec.labels[bin], side,
                     BodyRegion::Body, bin == spec.neutral_bin});
  };

  for (const Side side : {Side::Left, Side::Right}) {
    const std::string p = side_prefix(side);
    add("knee", "bend", book.bend,
        degrees_between(joint(p + "hip") - joint(p + "knee"),
                        joint(p + "ankle") - joint(p + "knee")),
        side);
  }
  for (const Side side : {Side::Left, Side::Right}) {
    const std::string p = side_prefix(side);
    add("elbow", "bend", book.bend,
        degrees_between(joint(p + "shoulder") - joint(p + "elbow"),
                        joint(p + "wrist") - joint(p + "elbow")),
        side);
  }
  for (const Side side : {Side::Left, Side::Right}) {
    const std::string p = side_prefix(side);
    add("hand", "height", book.height,
        up.dot(joint(p + "wrist") - joint(p + "shoulder")), side);
    add("hand", "depth", book.depth, forward.dot(joint(p + "wrist") - joint("spine3")), side);
  }
  add("hands", "separation", book.separation,
      (joint("left_wrist") - joint("right_wrist")).norm(), Side::None);
  return codes;
}

std::vector<PoseCode> aggregate_codes(const std::vector<PoseCode>& codes) {
  std::vector<PoseCode> kept;
  for (const auto& code : codes) {
    if (!code.neutral) kept.push_back(code);
  }
  // merge matching left/right statements into a single "both" code
  std::vector<PoseCode> merged;
  std::vector<bool> used(kept.size(), false);
  for (size_t i = 0; i < kept.size(); ++i) {
    if (used[i]) continue;
    PoseCode code = kept[i];
    if (code.side == Side::Left || code.side == Side::Right) {
      const Side other = code.side == Side::Left ? Side::Right : Side::Left;
      for (size_t j = i + 1; j < kept.size(); ++j) {
        if (used[j]) continue;
        if (kept[j].side == other && kept[j].subject == code.subject &&
            kept[j].relation == code.relation && kept[j].bin == code.bin) {
          code.side = Side::Both;
          used[j] = true;
          break;
        }
      }
    }
    merged.push_back(std::move(code));
  }
  std::stable_sort(merged.begin(), merged.end(), [](const PoseCode& a, const PoseCode& b) {
    return static_cast<int>(a.region) < static_cast<int>(b.region);
  });
  return merged;
}

const std::vector<std::string>* CaptionTemplates::find(const std::string& relation) const {
  for (const auto& [rel, list] : variants) {
    if (rel == relation) return &list;
  }
  return nullptr;
}

void CaptionTemplates::validate() const {
  for (const auto& [rel, list] : variants) {
    if (rel.empty() || list.empty()) {
      throw ValidationError("caption templates: empty relation or variant list");
    }
  }
}

CaptionTemplates make_default_templates() {
  CaptionTemplates t;
  t.variants = {
      {"bend", {"{subject} {be} {bin}.", "{subject} {be} kept {bin}."}},
      {"height", {"{subject} {be} {bin}.", "{subject} {be} held {bin}."}},
      {"depth", {"{subject} {be} {bin}.", "{subject} {be} placed {bin}."}},
      {"separation", {"{subject} {be} {bin}.", "{subject} {be} positioned {bin}."}},
      {"curl", {"{subject} {be} {bin}.", "{subject} {be} held {bin}."}},
      {"spread", {"{subject} {be} {bin}."}},
      {"emotion", {"the face shows a {bin} expression.", "the facial expression looks {bin}."}},
  };
  return t;
}

namespace {

std::string subject_phrase(const PoseCode& code) {
  switch (code.side) {
    case Side::Left:
      return "the left " + code.subject;
    case Side::Right:
      return "the right " + code.subject;
    case Side::Both:
      return "both " + code.subject + "s";
    case Side::None:
      break;
  }
  return "the " + code.subject;
}

std::string replace_all(std::string text, const std::string& key, const std::string& value) {
  size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    text.replace(pos, key.size(), value);
    pos += value.size();
  }
  return text;
}

std::string realize(const std::string& tmpl, const PoseCode& code) {
  const std::string subject = subject_phrase(code);
  const bool plural = code.side == Side::Both || subject.back() == 's';
  std::string out = replace_all(tmpl, "{subject}", subject);
  out = replace_all(out, "{be}", plural ? "are" : "is");
  out = replace_all(out, "{bin}", code.bin);
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(out[0]));
  return out;
}

}  // namespace

Description render_description(const std::vector<PoseCode>& aggregated,
                               const std::optional<std::string>& emotion,
                               const CaptionTemplates& templates, std::uint64_t seed) {
  templates.validate();
  std::mt19937_64 gen(seed);
  Description description;
  std::vector<PoseCode> codes = aggregated;
  if (emotion) {
    codes.push_back({"face", "emotion", *emotion, Side::None, BodyRegion::Face, false});
  }
  for (const auto& code : codes) {
    const auto* list = templates.find(code.relation);
    if (!list) throw ValidationError("no caption template for relation: " + code.relation);
    const auto& tmpl = (*list)[gen() % list->size()];
    description.sentences.push_back(realize(tmpl, code));
    description.provenance.push_back({code});
  }
  return description;
}

Description describe_frame(const JointMatrix& joints, const Skeleton& skeleton,
                           const PoseCodebook& book, const CaptionTemplates& templates,
                           const std::optional<std::string>& emotion, std::uint64_t seed) {
  book.validate();
  std::vector<PoseCode> codes = body_posecodes(joints, skeleton, book.body);
  for (const Side side : {Side::Left, Side::Right}) {
    const auto hand = hand_posecodes(joints, skeleton, side, book.finger);
    codes.insert(codes.end(), hand.begin(), hand.end());
  }
  return render_description(aggregate_codes(codes), emotion, templates, seed);
}

// ---------------------------------------------------------------------------
// Versioned data files

namespace {

nlohmann::json bins_to_json(const BinSpec& spec) {
  return {{"boundaries", spec.boundaries}, {"labels", spec.labels}, {"neutral", spec.neutral_bin}};
}

BinSpec bins_from_json(const nlohmann::json& j) {
  BinSpec spec;
  spec.boundaries = j.at("boundaries").get<std::vector<double>>();
  spec.labels = j.at("labels").get<std::vector<std::string>>();
  spec.neutral_bin = j.at("neutral").get<int>();
  return spec;
}

nlohmann::json read_json(const std::string& path, const std::string& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("parse error in " + path + ": " + e.what());
  }
  if (j.value("schema", "") != schema) {
    throw ValidationError(path + " is not a " + schema + " file");
  }
  return j;
}

void write_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace

PoseCodebook load_codebook(const std::string& path) {
  const nlohmann::json j = read_json(path, "mocap-posecodes");
  PoseCodebook book;
  try {
    book.version = j.at("version").get<int>();
    const auto& body = j.at("body");
    book.body.bend = bins_from_json(body.at("bend"));
    book.body.height = bins_from_json(body.at("height"));
    book.body.depth = bins_from_json(body.at("depth"));
    book.body.separation = bins_from_json(body.at("separation"));
    const auto& finger = j.at("finger");
    book.finger.curl = bins_from_json(finger.at("curl"));
    book.finger.spread_cutoff = finger.at("spread_cutoff").get<double>();
    book.finger.spread_label = finger.at("spread_label").get<std::string>();
    book.finger.together_label = finger.at("together_label").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("codebook schema error: " + std::string(e.what()));
  }
  book.validate();
  return book;
}

void save_codebook(const PoseCodebook& book, const std::string& path) {
  book.validate();
  nlohmann::json j;
  j["schema"] = "mocap-posecodes";
  j["version"] = book.version;
  j["body"] = {{"bend", bins_to_json(book.body.bend)},
               {"height", bins_to_json(book.body.height)},
               {"depth", bins_to_json(book.body.depth)},
               {"separation", bins_to_json(book.body.separation)}};
  j["finger"] = {{"curl", bins_to_json(book.finger.curl)},
                 {"spread_cutoff", book.finger.spread_cutoff},
                 {"spread_label", book.finger.spread_label},
                 {"together_label", book.finger.together_label}};
  write_json(j, path);
}

CaptionTemplates load_templates(const std::string& path) {
  const nlohmann::json j = read_json(path, "mocap-captions");
  CaptionTemplates t;
  try {
    t.version = j.at("version").get<int>();
    for (const auto& entry : j.at("templates")) {
      t.variants.emplace_back(entry.at("relation").get<std::string>(),
                              entry.at("variants").get<std::vector<std::string>>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("caption template schema error: " + std::string(e.what()));
  }
  t.validate();
  return t;
}

void save_templates(const CaptionTemplates& templates, const std::string& path) {
  templates.validate();
  nlohmann::json j;
  j["schema"] = "mocap-captions";
  j["version"] = templates.version;
  j["templates"] = nlohmann::json::array();
  for (const auto& [rel, list] : templates.variants) {
    j["templates"].push_back({{"relation", rel}, {"variants", list}});
  }
  write_json(j, path);
}

}  // namespace mocap
