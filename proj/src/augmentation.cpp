#include "mocap/augmentation.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <random>

#include "mocap/errors.hpp"

namespace mocap {

std::vector<int> lower_body_rotations(const Skeleton& skeleton) {
  std::vector<int> rotations;
  for (int j = 0; j < skeleton.joint_count(); ++j) {
    if (skeleton.group[j] != JointGroup::Foot) continue;
    for (int a = j; skeleton.parent[a] >= 0; a = skeleton.parent[a]) {
      if (skeleton.rot_index[a] >= 0) rotations.push_back(skeleton.rot_index[a]);
    }
  }
  std::sort(rotations.begin(), rotations.end());
  rotations.erase(std::unique(rotations.begin(), rotations.end()), rotations.end());
  return rotations;
}

void MotionLibrary::validate() const {
  if (entries.empty()) throw ValidationError("motion library is empty");
  for (const auto& entry : entries) {
    if (entry.poses.empty()) throw ValidationError("motion library entry has no frames");
  }
}

PoseSequence resample_poses(const PoseSequence& poses, int length) {
  if (poses.empty()) throw ValidationError("cannot resample an empty sequence");
  if (length < 1) throw ValidationError("resample length must be >= 1");
  const int m = static_cast<int>(poses.size());
  PoseSequence out;
  out.reserve(length);
  for (int i = 0; i < length; ++i) {
    const double s = length == 1 ? 0.0 : double(i) * (m - 1) / (length - 1);
    const int lo = std::min(static_cast<int>(s), m - 1);
    const int hi = std::min(lo + 1, m - 1);
    const double w = s - lo;
    out.push_back(WholeBodyPose::unflatten((1.0 - w) * poses[lo].flatten() +
                                           w * poses[hi].flatten()));
  }
  return out;
}

LowerBodyAugmentation augment_lower_body(const MotionSequence& seq, const MotionLibrary& library,
                                         const Skeleton& skeleton) {
  library.validate();
  if (seq.length() == 0) throw ValidationError("cannot augment an empty sequence");
  const std::vector<int> lower = lower_body_rotations(skeleton);
  const auto is_lower = [&](int r) {
    return std::binary_search(lower.begin(), lower.end(), r);
  };

  // comparison channels: global orient plus every non-lower rotation
  std::vector<int> channels = {0, 1, 2};
  for (int r = 0; r < kRotationCount; ++r) {
    if (is_lower(r)) continue;
    for (int c = 0; c < 3; ++c) channels.push_back(6 + 3 * r + c);
  }

  const int n = seq.length();
  std::vector<Eigen::VectorXd> flat(n);
  for (int t = 0; t < n; ++t) flat[t] = seq.frames[t].pose.flatten();

  int best = -1;
  double best_distance = std::numeric_limits<double>::infinity();
  PoseSequence best_resampled;
  for (size_t e = 0; e < library.entries.size(); ++e) {
    PoseSequence resampled = resample_poses(library.entries[e].poses, n);
    double distance = 0;
    for (int t = 0; t < n; ++t) {
      const Eigen::VectorXd other = resampled[t].flatten();
      double sq = 0;
      for (const int c : channels) {
        const double d = flat[t][c] - other[c];
        sq += d * d;
      }
      distance += std::sqrt(sq);
    }
    distance /= n;
    if (distance < best_distance) {
      best_distance = distance;
      best = static_cast<int>(e);
      best_resampled = std::move(resampled);
    }
  }

  LowerBodyAugmentation out;
  out.sequence = seq;
  out.entry_index = best;
  out.keyword = library.entries[best].keyword;
  for (int t = 0; t < n; ++t) {
    for (const int r : lower) {
      out.sequence.frames[t].pose.theta_body.col(r) = best_resampled[t].rotation(r);
    }
  }
  return out;
}

void FaceLibrary::validate() const {
  if (entries.empty()) throw ValidationError("face library is empty");
  for (const auto& entry : entries) {
    if (entry.expression.empty() || entry.expression.size() != entry.jaw.size()) {
      throw ValidationError("face library entry malformed");
    }
  }
}

FaceAugmentation augment_face(const MotionSequence& seq, const FaceLibrary& library,
                              std::uint64_t seed) {
  library.validate();
  if (seq.length() == 0) throw ValidationError("cannot augment an empty sequence");
  std::mt19937_64 gen(seed);
  const int index = static_cast<int>(gen() % library.entries.size());
  const FaceLibraryEntry& entry = library.entries[index];

  const int n = seq.length();
  const int m = static_cast<int>(entry.expression.size());
  FaceAugmentation out;
  out.sequence = seq;
  out.entry_index = index;
  out.emotion = entry.emotion;
  for (int t = 0; t < n; ++t) {
    const double s = n == 1 ? 0.0 : double(t) * (m - 1) / (n - 1);
    const int lo = std::min(static_cast<int>(s), m - 1);
    const int hi = std::min(lo + 1, m - 1);
    const double w = s - lo;
    out.sequence.frames[t].pose.expression =
        (1.0 - w) * entry.expression[lo] + w * entry.expression[hi];
    out.sequence.frames[t].pose.theta_jaw = (1.0 - w) * entry.jaw[lo] + w * entry.jaw[hi];
  }
  return out;
}

FaceLibrary load_face_library(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read face library: " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad face library: ") + e.what());
  }
  FaceLibrary library;
  try {
    if (doc.at("schema").get<std::string>() != "mocap-face-library") {
      throw ValidationError("not a face library file: " + path);
    }
    for (const nlohmann::json& item : doc.at("entries")) {
      FaceLibraryEntry entry;
      entry.emotion = item.at("emotion").get<std::string>();
      for (const nlohmann::json& frame : item.at("frames")) {
        const auto expr = frame.at("expression").get<std::vector<double>>();
        if (static_cast<int>(expr.size()) != kExpressionDim) {
          throw ValidationError("face library expression has wrong size");
        }
        entry.expression.push_back(
            Eigen::Map<const Eigen::Matrix<double, kExpressionDim, 1>>(expr.data()));
        const nlohmann::json& jaw = frame.at("jaw");
        entry.jaw.emplace_back(jaw.at(0).get<double>(), jaw.at(1).get<double>(),
                               jaw.at(2).get<double>());
      }
      library.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad face library: ") + e.what());
  }
  library.validate();
  return library;
}

void save_face_library(const FaceLibrary& library, const std::string& path) {
  library.validate();
  nlohmann::json doc;
  doc["schema"] = "mocap-face-library";
  doc["version"] = 1;
  nlohmann::json entries = nlohmann::json::array();
  for (const FaceLibraryEntry& entry : library.entries) {
    nlohmann::json frames = nlohmann::json::array();
    for (size_t t = 0; t < entry.expression.size(); ++t) {
      frames.push_back(
          {{"expression", std::vector<double>(entry.expression[t].data(),
                                              entry.expression[t].data() + kExpressionDim)},
           {"jaw", {entry.jaw[t][0], entry.jaw[t][1], entry.jaw[t][2]}}});
    }
    entries.push_back({{"emotion", entry.emotion}, {"frames", frames}});
  }
  doc["entries"] = entries;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write face library: " + path);
  out << doc.dump(2) << "\n";
}

}  // namespace mocap
