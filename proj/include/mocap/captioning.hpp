#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mocap/kinematics.hpp"
#include "mocap/skeleton.hpp"

namespace mocap {

enum class Side { None, Left, Right, Both };

enum class BodyRegion { Body, Hand, Face };

// One categorical statement about the pose ("left knee: bend = completely
// bent"). Neutral codes describe the default posture and are dropped during
// aggregation.
struct PoseCode {
  std::string subject;   // "knee", "elbow", "hand", "index finger", "face"
  std::string relation;  // "bend", "height", "depth", "separation", "curl", "spread", "emotion"
  std::string bin;       // codebook bin label
  Side side = Side::None;
  BodyRegion region = BodyRegion::Body;
  bool neutral = false;

  bool operator==(const PoseCode&) const = default;
};

// Sorted open-below bins: value <= boundaries[0] -> labels[0], ...,
// value > boundaries.back() -> labels.back().
struct BinSpec {
  std::vector<double> boundaries;
  std::vector<std::string> labels;
  int neutral_bin = -1;  // -1: no bin is neutral

  void validate() const;
  int classify(double value) const;
};

// The six elementary finger poses: four curl bins over the wrist-tip-root
// angle plus spread apart / together over normalized fingertip gaps.
struct FingerPoseCodebook {
  BinSpec curl;
  double spread_cutoff = 0.25;  // fingertip gap in hand lengths
  std::string spread_label = "spread apart";
  std::string together_label = "held together";

  void validate() const;
};

struct BodyCodebook {
  BinSpec bend;        // interior limb angle in degrees (knees, elbows)
  BinSpec height;      // hand height minus shoulder height, body frame
  BinSpec depth;       // hand forward offset from the spine, body frame
  BinSpec separation;  // wrist-to-wrist distance
  void validate() const;
};

struct PoseCodebook {
  int version = 1;
  BodyCodebook body;
  FingerPoseCodebook finger;
  void validate() const;
};

PoseCodebook make_default_codebook();
PoseCodebook load_codebook(const std::string& path);
void save_codebook(const PoseCodebook& book, const std::string& path);

inline constexpr const char* kFingerNames[5] = {"thumb", "index", "middle", "ring", "pinky"};

// Angle (degrees) between V(wrist, fingertip) and V(fingertip, finger root).
// Empty when any of the three keypoints is missing from the skeleton.
std::optional<double> finger_curl_angle(const JointMatrix& joints, const Skeleton& skeleton,
                                        Side side, int finger);

// Curl code for one finger; empty (with a diagnostic appended when given)
// when keypoints are missing.
std::optional<PoseCode> classify_finger_pose(const JointMatrix& joints, const Skeleton& skeleton,
                                             Side side, int finger,
                                             const FingerPoseCodebook& book,
                                             std::vector<std::string>* diagnostics = nullptr);

// All finger codes for one hand: five curl codes plus one spread/together
// code per adjacent fingertip pair with the gap measured in hand lengths.
std::vector<PoseCode> hand_posecodes(const JointMatrix& joints, const Skeleton& skeleton,
                                     Side side, const FingerPoseCodebook& book,
                                     std::vector<std::string>* diagnostics = nullptr);

// Body rule set: knee/elbow bend bins, hand height and depth in the body
// frame, wrist separation. Exhaustive and deterministic; all measurements are
// body-local, so the codes are rigid-transform invariant.
std::vector<PoseCode> body_posecodes(const JointMatrix& joints, const Skeleton& skeleton,
                                     const BodyCodebook& book);

// Merges equal left/right codes into a single "both" code, drops neutral
// codes, and orders by region (body, hands, face).
std::vector<PoseCode> aggregate_codes(const std::vector<PoseCode>& codes);

struct Description {
  std::vector<std::string> sentences;
  std::vector<std::vector<PoseCode>> provenance;  // codes behind each sentence
};

// Sentence templates per relation; "{subject}" "{be}" "{bin}" placeholders.
struct CaptionTemplates {
  int version = 1;
  std::vector<std::pair<std::string, std::vector<std::string>>> variants;

  const std::vector<std::string>* find(const std::string& relation) const;
  void validate() const;
};

CaptionTemplates make_default_templates();
CaptionTemplates load_templates(const std::string& path);
void save_templates(const CaptionTemplates& templates, const std::string& path);

// Deterministic templated realization: one sentence per aggregated code, the
// seed picks phrasing variants, the emotion label becomes a facial sentence.
Description render_description(const std::vector<PoseCode>& aggregated,
                               const std::optional<std::string>& emotion,
                               const CaptionTemplates& templates, std::uint64_t seed);

// joints -> aggregated codes -> text, with the emotion attached.
Description describe_frame(const JointMatrix& joints, const Skeleton& skeleton,
                           const PoseCodebook& book, const CaptionTemplates& templates,
                           const std::optional<std::string>& emotion, std::uint64_t seed);

}  // namespace mocap
