#pragma once

#include <string>
#include <vector>

#include "mocap/shots.hpp"
#include "mocap/trajectory.hpp"
#include "mocap/types.hpp"

namespace mocap {

inline constexpr int kArchiveSchemaVersion = 1;
inline constexpr char kArchiveMagic[8] = {'M', 'O', 'C', 'A', 'R', 'C', 'H', '\n'};

struct ArchiveManifest {
  int schema_version = kArchiveSchemaVersion;
  double fps = 30.0;
  std::string skeleton_id;
  std::string subject_id;
  int view_count = 0;
  int keypoint_count = 0;  // joints per 2D/3D keypoint frame
  int frame_count = 0;

  void validate() const;
};

// The single on-disk unit every pipeline stage reads and writes. Numeric
// payloads live in named float64 blocks after the manifest; everything else
// (captions, tracklets, ground plane) lives in the manifest itself.
struct SequenceArchive {
  ArchiveManifest manifest;
  std::vector<SequenceFrame> frames;               // pose + per-view k2d + k3d
  std::vector<std::vector<CameraState>> cameras;   // per frame, per view
  std::vector<BBox> bboxes;                        // per frame; empty = absent
  std::vector<FrameSignature> signatures;          // per frame; empty = absent
  std::vector<FlowField> flows;                    // frame_count - 1; empty = absent
  Eigen::MatrixXd contacts;                        // frames x feet; 0x0 = absent
  GroundPlane ground;
  bool has_ground = false;
  std::vector<std::string> captions;               // per frame; empty = absent
  std::vector<Tracklet> tracklets;                 // filled by the shots stage
  std::string emotion;                             // set by face augmentation

  MotionSequence sequence() const;  // frames + fps + subject id
  void set_sequence(const MotionSequence& seq);
  void validate() const;
};

// Binary container: 8-byte magic, little-endian u64 manifest length, JSON
// manifest, then the float64 little-endian blocks declared in the manifest.
// Round trips are lossless to full double precision; a schema-version or
// magic mismatch throws ValidationError.
SequenceArchive load_archive(const std::string& path);
void save_archive(const SequenceArchive& archive, const std::string& path);

// Normalizes a plain structured-text detector dump (per-frame keypoint rows
// [x, y, confidence] per view plus optional [x, y, z, confidence] triangles)
// into an archive with identity cameras.
SequenceArchive import_keypoints(const std::string& path);

}  // namespace mocap
