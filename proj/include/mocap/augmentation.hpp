#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mocap/skeleton.hpp"
#include "mocap/types.hpp"

namespace mocap {

// Rotation indices on the paths from Foot-group joints up to (excluding) the
// root: toes, ankles, knees, hips. Sorted, unique.
std::vector<int> lower_body_rotations(const Skeleton& skeleton);

struct MotionLibraryEntry {
  PoseSequence poses;
  std::string keyword;  // "sitting", "standing", "walking", ...
};

struct MotionLibrary {
  std::vector<MotionLibraryEntry> entries;
  void validate() const;  // nonempty, no empty entries
};

// Uniform temporal resampling of pose parameters to `length` frames
// (per-channel linear interpolation on the flattened layout).
PoseSequence resample_poses(const PoseSequence& poses, int length);

struct LowerBodyAugmentation {
  MotionSequence sequence;
  int entry_index = -1;
  std::string keyword;
};

// Replaces the lower-body rotation channels with those of the library entry
// nearest in mean L2 distance over the remaining rotation channels (library
// entries resampled to the input length first). Every other channel of the
// input is preserved exactly.
LowerBodyAugmentation augment_lower_body(const MotionSequence& seq, const MotionLibrary& library,
                                         const Skeleton& skeleton);

struct FaceLibraryEntry {
  std::vector<Eigen::Matrix<double, kExpressionDim, 1>> expression;
  std::vector<Vec3> jaw;  // aligned with expression
  std::string emotion;
};

struct FaceLibrary {
  std::vector<FaceLibraryEntry> entries;
  void validate() const;
};

struct FaceAugmentation {
  MotionSequence sequence;
  int entry_index = -1;
  std::string emotion;
};

// Seeded uniform selection from the library; the chosen expression/jaw
// sequence is linearly interpolated to the input frame count and installed.
// Body and hand channels are preserved exactly.
FaceAugmentation augment_face(const MotionSequence& seq, const FaceLibrary& library,
                              std::uint64_t seed);

// Versioned structured-text library files.
FaceLibrary load_face_library(const std::string& path);
void save_face_library(const FaceLibrary& library, const std::string& path);

}  // namespace mocap
