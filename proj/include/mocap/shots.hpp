#pragma once

#include <optional>
#include <vector>

#include "mocap/types.hpp"

namespace mocap {

// Normalized content signature of one frame.
struct FrameSignature {
  Eigen::VectorXd histogram;  // entries >= 0, sums to 1
  int frame_index = 0;

  void validate() const;
};

struct BBox {
  Vec2 center = Vec2::Zero();
  Vec2 size = Vec2::Zero();  // (w, h), positive
  int frame_index = 0;
  std::optional<int> track_id;

  double diagonal() const { return size.norm(); }
  void validate() const;
};

// Dense per-pixel flow between frames (t, t+1), pixels/frame.
struct FlowField {
  int frame = 0;         // t of the (t, t+1) pair
  Eigen::MatrixXd u;     // rows x cols, x component
  Eigen::MatrixXd v;     // y component

  void validate() const;
};

enum class CutReason { Content, Position, Flow, None };

struct Tracklet {
  int start_frame = 0;
  int end_frame = 0;  // inclusive
  int track_id = 0;
  CutReason cut_reason = CutReason::None;
};

// Frame t is a cut iff the L1 histogram distance between t-1 and t exceeds
// the threshold. Indices strictly increasing.
std::vector<int> detect_content_shots(const std::vector<FrameSignature>& signatures,
                                      double threshold);

struct TrackerParams {
  double process_noise = 1.0;
  double measurement_noise = 1.0;
  double gate_distance = 50.0;  // pixels on the predicted center
  int max_missed = 10;          // coasting frames before a track is dropped
};

// Constant-velocity Kalman tracking on (cx, cy, w, h) with greedy
// nearest-predicted-center association. Unmatched detections (including
// within-gate failures after a position jump) start new track ids.
std::vector<std::vector<BBox>> track_subjects(const std::vector<std::vector<BBox>>& detections,
                                              const TrackerParams& params);

// Cut between t and t+1 (reported as index t+1) iff the norm of the mean flow
// vector inside the frame-t box exceeds the threshold.
std::vector<int> detect_flow_shots(const std::vector<FlowField>& flows,
                                   const std::vector<BBox>& boxes, double threshold);

// Maximal frame ranges with no cut of any kind and a single track id; ranges
// shorter than min_length are discarded. track_ids[t] is the subject's track
// id at frame t (nullopt = subject absent).
std::vector<Tracklet> segment_sequence(int frame_count, const std::vector<int>& content_cuts,
                                       const std::vector<std::optional<int>>& track_ids,
                                       const std::vector<int>& flow_cuts, int min_length);

}  // namespace mocap
