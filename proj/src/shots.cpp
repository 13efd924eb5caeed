#include "mocap/shots.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mocap/errors.hpp"

namespace mocap {

void FrameSignature::validate() const {
  if ((histogram.array() < 0.0).any()) throw ValidationError("histogram entries must be >= 0");
  if (std::abs(histogram.sum() - 1.0) > 1e-9) throw ValidationError("histogram must sum to 1");
}

void BBox::validate() const {
  if (!(size.x() > 0.0 && size.y() > 0.0)) throw ValidationError("bbox size must be positive");
}

void FlowField::validate() const {
  if (u.rows() != v.rows() || u.cols() != v.cols()) {
    throw ValidationError("flow components must have equal dims");
  }
  if (!u.allFinite() || !v.allFinite()) throw ValidationError("flow contains non-finite vectors");
}

std::vector<int> detect_content_shots(const std::vector<FrameSignature>& signatures,
                                      double threshold) {
  if (!(threshold > 0.0)) throw ValidationError("content threshold must be positive");
  std::vector<int> cuts;
  for (size_t t = 1; t < signatures.size(); ++t) {
    signatures[t].validate();
    const double d = (signatures[t].histogram - signatures[t - 1].histogram).lpNorm<1>();
    if (d > threshold) cuts.push_back(static_cast<int>(t));
  }
  return cuts;
}

namespace {

struct KalmanTrack {
  int id;
  Eigen::Matrix<double, 8, 1> x;  // cx, cy, w, h, and velocities
  Eigen::Matrix<double, 8, 8> p;
  int missed = 0;
};

}  // namespace

std::vector<std::vector<BBox>> track_subjects(const std::vector<std::vector<BBox>>& detections,
                                              const TrackerParams& params) {
  if (!(params.gate_distance > 0.0)) throw ValidationError("gate distance must be positive");

  using Mat8 = Eigen::Matrix<double, 8, 8>;
  Mat8 f = Mat8::Identity();
  f.topRightCorner<4, 4>() = Eigen::Matrix4d::Identity();
  const Mat8 q = params.process_noise * Mat8::Identity();
  const Eigen::Matrix4d r = params.measurement_noise * Eigen::Matrix4d::Identity();
  Eigen::Matrix<double, 4, 8> h = Eigen::Matrix<double, 4, 8>::Zero();
  h.leftCols<4>() = Eigen::Matrix4d::Identity();

  std::vector<KalmanTrack> tracks;
  int next_id = 0;
  std::vector<std::vector<BBox>> out(detections.size());

  for (size_t t = 0; t < detections.size(); ++t) {
    for (auto& tr : tracks) {
      tr.x = f * tr.x;
      tr.p = f * tr.p * f.transpose() + q;
    }

    const auto& dets = detections[t];
    // greedy global nearest-neighbor on predicted centers
    struct Cand {
      double dist;
      int track;
      int det;
    };
    std::vector<Cand> cands;
    for (size_t k = 0; k < tracks.size(); ++k) {
      for (size_t d = 0; d < dets.size(); ++d) {
        dets[d].validate();
        const double dist = (tracks[k].x.head<2>() - dets[d].center).norm();
        if (dist <= params.gate_distance) {
          cands.push_back({dist, static_cast<int>(k), static_cast<int>(d)});
        }
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.dist != b.dist) return a.dist < b.dist;
      return std::tie(a.track, a.det) < std::tie(b.track, b.det);
    });

    std::vector<int> det_track(dets.size(), -1);
    std::vector<bool> track_used(tracks.size(), false);
    for (const auto& c : cands) {
      if (track_used[c.track] || det_track[c.det] >= 0) continue;
      track_used[c.track] = true;
      det_track[c.det] = c.track;
    }

    out[t].reserve(dets.size());
    for (size_t d = 0; d < dets.size(); ++d) {
      BBox box = dets[d];
      Eigen::Vector4d z;
      z << box.center, box.size;
      if (det_track[d] >= 0) {
        auto& tr = tracks[det_track[d]];
        const Eigen::Matrix4d s = h * tr.p * h.transpose() + r;
        const Eigen::Matrix<double, 8, 4> k = tr.p * h.transpose() * s.inverse();
        tr.x += k * (z - h * tr.x);
        tr.p = (Mat8::Identity() - k * h) * tr.p;
        tr.missed = 0;
        box.track_id = tr.id;
      } else {
        KalmanTrack tr;
        tr.id = next_id++;
        tr.x.setZero();
        tr.x.head<4>() = z;
        tr.p = 10.0 * Mat8::Identity();
        tracks.push_back(tr);
        track_used.push_back(true);
        box.track_id = tr.id;
      }
      out[t].push_back(box);
    }

    for (size_t k = 0; k < tracks.size(); ++k) {
      if (!track_used[k]) ++tracks[k].missed;
    }
    std::erase_if(tracks, [&](const KalmanTrack& tr) { return tr.missed > params.max_missed; });
  }
  return out;
}

std::vector<int> detect_flow_shots(const std::vector<FlowField>& flows,
                                   const std::vector<BBox>& boxes, double threshold) {
  std::vector<int> cuts;
  for (const auto& box : boxes) {
    box.validate();
    const FlowField* field = nullptr;
    for (const auto& f : flows) {
      if (f.frame == box.frame_index) {
        field = &f;
        break;
      }
    }
    if (!field) continue;
    field->validate();

    const int rows = static_cast<int>(field->u.rows());
    const int cols = static_cast<int>(field->u.cols());
    const int x0 = static_cast<int>(std::floor(box.center.x() - box.size.x() / 2));
    const int x1 = static_cast<int>(std::ceil(box.center.x() + box.size.x() / 2));
    const int y0 = static_cast<int>(std::floor(box.center.y() - box.size.y() / 2));
    const int y1 = static_cast<int>(std::ceil(box.center.y() + box.size.y() / 2));
    if (x1 < 0 || y1 < 0 || x0 >= cols || y0 >= rows) {
      throw ValidationError("bounding box outside flow-field bounds");
    }
    Vec2 mean = Vec2::Zero();
    int count = 0;
    for (int y = std::max(0, y0); y <= std::min(rows - 1, y1); ++y) {
      for (int x = std::max(0, x0); x <= std::min(cols - 1, x1); ++x) {
        mean += Vec2(field->u(y, x), field->v(y, x));
        ++count;
      }
    }
    if (count == 0) continue;
    mean /= count;
    if (mean.norm() > threshold) cuts.push_back(box.frame_index + 1);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  return cuts;
}

std::vector<Tracklet> segment_sequence(int frame_count, const std::vector<int>& content_cuts,
                                       const std::vector<std::optional<int>>& track_ids,
                                       const std::vector<int>& flow_cuts, int min_length) {
  if (static_cast<int>(track_ids.size()) != frame_count) {
    throw ValidationError("track id list must cover every frame");
  }
  if (!std::is_sorted(content_cuts.begin(), content_cuts.end()) ||
      !std::is_sorted(flow_cuts.begin(), flow_cuts.end())) {
    throw ValidationError("cut lists must be sorted");
  }
  const std::set<int> content(content_cuts.begin(), content_cuts.end());
  const std::set<int> flow(flow_cuts.begin(), flow_cuts.end());

  // reason of the cut starting segment at frame t; content > position > flow
  auto cut_reason_at = [&](int t) -> std::optional<CutReason> {
    if (content.count(t)) return CutReason::Content;
    if (t > 0 && track_ids[t] != track_ids[t - 1]) return CutReason::Position;
    if (flow.count(t)) return CutReason::Flow;
    return std::nullopt;
  };

  std::vector<Tracklet> out;
  int start = -1;
  auto close = [&](int end, CutReason reason) {
    if (start >= 0 && end - start + 1 >= min_length && track_ids[start]) {
      out.push_back({start, end, *track_ids[start], reason});
    }
    start = -1;
  };

  for (int t = 0; t < frame_count; ++t) {
    const auto reason = cut_reason_at(t);
    if (reason) close(t - 1, *reason);
    if (!track_ids[t]) {
      close(t - 1, CutReason::Position);
      continue;
    }
    if (start < 0) start = t;
  }
  close(frame_count - 1, CutReason::None);
  return out;
}

}  // namespace mocap
