#include "mocap/archive.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <map>

#include "mocap/errors.hpp"

namespace mocap {

namespace {

using nlohmann::json;

const char* cut_name(CutReason r) {
  switch (r) {
    case CutReason::Content: return "content";
    case CutReason::Position: return "position";
    case CutReason::Flow: return "flow";
    case CutReason::None: return "none";
  }
  return "none";
}

CutReason cut_from_name(const std::string& s) {
  if (s == "content") return CutReason::Content;
  if (s == "position") return CutReason::Position;
  if (s == "flow") return CutReason::Flow;
  if (s == "none") return CutReason::None;
  throw ValidationError("unknown cut reason: " + s);
}

// Named row-major float64 payloads appended after the manifest.
struct BlockWriter {
  json index = json::array();
  std::string payload;

  void add(const std::string& name, const Eigen::MatrixXd& m) {
    index.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    const size_t bytes = sizeof(double) * rm.size();
    const size_t at = payload.size();
    payload.resize(at + bytes);
    if (bytes > 0) std::memcpy(payload.data() + at, rm.data(), bytes);
  }
};

struct BlockReader {
  std::map<std::string, Eigen::MatrixXd> blocks;

  bool has(const std::string& name) const { return blocks.count(name) > 0; }

  const Eigen::MatrixXd& get(const std::string& name, Eigen::Index rows,
                             Eigen::Index cols) const {
    auto it = blocks.find(name);
    if (it == blocks.end()) throw ValidationError("archive missing block: " + name);
    if (it->second.rows() != rows || it->second.cols() != cols) {
      throw ValidationError("archive block has wrong shape: " + name);
    }
    return it->second;
  }
};

Eigen::MatrixXd camera_row_matrix(const std::vector<std::vector<CameraState>>& cameras, int view) {
  Eigen::MatrixXd m(cameras.size(), 19);
  for (size_t t = 0; t < cameras.size(); ++t) {
    const CameraState& cam = cameras[t][view];
    int k = 0;
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 3; ++c) m(t, k++) = cam.intrinsics(r, c);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m(t, k++) = cam.rotation(r, c);
    for (int c = 0; c < 3; ++c) m(t, k++) = cam.translation[c];
    m(t, k) = cam.scale;
  }
  return m;
}

CameraState camera_from_row(const Eigen::MatrixXd& m, Eigen::Index t) {
  CameraState cam;
  int k = 0;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) cam.intrinsics(r, c) = m(t, k++);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cam.rotation(r, c) = m(t, k++);
  for (int c = 0; c < 3; ++c) cam.translation[c] = m(t, k++);
  cam.scale = m(t, k);
  return cam;
}

}  // namespace

void ArchiveManifest::validate() const {
  if (schema_version != kArchiveSchemaVersion) {
    throw ValidationError("unsupported archive schema version " +
                          std::to_string(schema_version));
  }
  if (!(fps > 0)) throw ValidationError("archive fps must be positive");
  if (frame_count < 0 || view_count < 0 || keypoint_count < 0) {
    throw ValidationError("archive manifest counts must be non-negative");
  }
}

MotionSequence SequenceArchive::sequence() const {
  MotionSequence seq;
  seq.frames = frames;
  seq.fps = manifest.fps;
  seq.subject_id = manifest.subject_id;
  return seq;
}

void SequenceArchive::set_sequence(const MotionSequence& seq) {
  frames = seq.frames;
  manifest.fps = seq.fps;
  manifest.subject_id = seq.subject_id;
  manifest.frame_count = seq.length();
}

void SequenceArchive::validate() const {
  manifest.validate();
  const size_t n = static_cast<size_t>(manifest.frame_count);
  if (frames.size() != n) throw ValidationError("archive frame count mismatch");
  if (cameras.size() != n) throw ValidationError("archive camera count mismatch");
  for (size_t t = 0; t < n; ++t) {
    if (frames[t].views.size() != static_cast<size_t>(manifest.view_count) ||
        cameras[t].size() != static_cast<size_t>(manifest.view_count)) {
      throw ValidationError("archive view count mismatch at frame " + std::to_string(t));
    }
    frames[t].pose.validate();
    for (const auto& view : frames[t].views) view.validate(manifest.keypoint_count);
    frames[t].k3d.validate();
    if (frames[t].k3d.count() != manifest.keypoint_count) {
      throw ValidationError("archive 3D keypoint count mismatch");
    }
    for (const auto& cam : cameras[t]) cam.validate();
  }
  if (!bboxes.empty() && bboxes.size() != n) {
    throw ValidationError("archive bbox count mismatch");
  }
  if (!signatures.empty() && signatures.size() != n) {
    throw ValidationError("archive signature count mismatch");
  }
  if (!flows.empty() && flows.size() + 1 != n) {
    throw ValidationError("archive flow count must be frame_count - 1");
  }
  if (contacts.size() > 0 && contacts.rows() != static_cast<Eigen::Index>(n)) {
    throw ValidationError("archive contact rows mismatch");
  }
  if (!captions.empty() && captions.size() != n) {
    throw ValidationError("archive caption count mismatch");
  }
  if (has_ground) ground.validate();
}

void save_archive(const SequenceArchive& archive, const std::string& path) {
  archive.validate();
  const int frames = archive.manifest.frame_count;
  const int views = archive.manifest.view_count;
  const int joints = archive.manifest.keypoint_count;

  BlockWriter blocks;
  {
    Eigen::MatrixXd poses(frames, kPoseDim);
    for (int t = 0; t < frames; ++t) poses.row(t) = archive.frames[t].pose.flatten().transpose();
    blocks.add("poses", poses);
  }
  for (int v = 0; v < views; ++v) {
    Eigen::MatrixXd points(frames, 2 * joints), conf(frames, joints);
    for (int t = 0; t < frames; ++t) {
      const KeypointFrame2D& k2d = archive.frames[t].views[v];
      for (int j = 0; j < joints; ++j) points.row(t).segment<2>(2 * j) = k2d.points.row(j);
      conf.row(t) = k2d.confidence.transpose();
    }
    const std::string suffix = "_v" + std::to_string(v);
    blocks.add("k2d_points" + suffix, points);
    blocks.add("k2d_conf" + suffix, conf);
    blocks.add("camera" + suffix, camera_row_matrix(archive.cameras, v));
  }
  {
    Eigen::MatrixXd points(frames, 3 * joints), conf(frames, joints);
    for (int t = 0; t < frames; ++t) {
      for (int j = 0; j < joints; ++j) {
        points.row(t).segment<3>(3 * j) = archive.frames[t].k3d.points.row(j);
      }
      conf.row(t) = archive.frames[t].k3d.confidence.transpose();
    }
    blocks.add("k3d_points", points);
    blocks.add("k3d_conf", conf);
  }
  if (!archive.bboxes.empty()) {
    Eigen::MatrixXd m(frames, 4);
    for (int t = 0; t < frames; ++t) {
      m.row(t) << archive.bboxes[t].center[0], archive.bboxes[t].center[1],
          archive.bboxes[t].size[0], archive.bboxes[t].size[1];
    }
    blocks.add("bboxes", m);
  }
  if (!archive.signatures.empty()) {
    const Eigen::Index bins = archive.signatures[0].histogram.size();
    Eigen::MatrixXd m(frames, bins);
    for (int t = 0; t < frames; ++t) m.row(t) = archive.signatures[t].histogram.transpose();
    blocks.add("signatures", m);
  }
  if (!archive.flows.empty()) {
    const Eigen::Index rows = archive.flows[0].u.rows();
    const Eigen::Index cols = archive.flows[0].u.cols();
    Eigen::MatrixXd u(frames - 1, rows * cols), v(frames - 1, rows * cols);
    for (int t = 0; t + 1 < frames; ++t) {
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> ru =
          archive.flows[t].u;
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rv =
          archive.flows[t].v;
      u.row(t) = Eigen::Map<Eigen::RowVectorXd>(ru.data(), ru.size());
      v.row(t) = Eigen::Map<Eigen::RowVectorXd>(rv.data(), rv.size());
    }
    blocks.add("flow_u", u);
    blocks.add("flow_v", v);
  }
  if (archive.contacts.size() > 0) blocks.add("contacts", archive.contacts);

  json manifest;
  manifest["schema_version"] = archive.manifest.schema_version;
  manifest["fps"] = archive.manifest.fps;
  manifest["skeleton_id"] = archive.manifest.skeleton_id;
  manifest["subject_id"] = archive.manifest.subject_id;
  manifest["view_count"] = views;
  manifest["keypoint_count"] = joints;
  manifest["frame_count"] = frames;
  if (!archive.flows.empty()) {
    manifest["flow_rows"] = archive.flows[0].u.rows();
    manifest["flow_cols"] = archive.flows[0].u.cols();
  }
  if (archive.has_ground) {
    manifest["ground"] = {{"normal", {archive.ground.normal[0], archive.ground.normal[1],
                                      archive.ground.normal[2]}},
                          {"offset", archive.ground.offset}};
  }
  if (!archive.captions.empty()) manifest["captions"] = archive.captions;
  if (!archive.emotion.empty()) manifest["emotion"] = archive.emotion;
  if (!archive.tracklets.empty()) {
    json list = json::array();
    for (const Tracklet& t : archive.tracklets) {
      list.push_back({{"start", t.start_frame},
                      {"end", t.end_frame},
                      {"track_id", t.track_id},
                      {"cut_reason", cut_name(t.cut_reason)}});
    }
    manifest["tracklets"] = list;
  }
  manifest["blocks"] = blocks.index;

  const std::string text = manifest.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write archive: " + path);
  out.write(kArchiveMagic, sizeof(kArchiveMagic));
  const std::uint64_t length = text.size();
  char header[8];
  for (int i = 0; i < 8; ++i) header[i] = static_cast<char>((length >> (8 * i)) & 0xff);
  out.write(header, sizeof(header));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(blocks.payload.data(), static_cast<std::streamsize>(blocks.payload.size()));
  if (!out) throw ValidationError("archive write failed: " + path);
}

SequenceArchive load_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read archive: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kArchiveMagic, sizeof(magic)) != 0) {
    throw ValidationError("not a sequence archive: " + path);
  }
  char header[8];
  in.read(header, sizeof(header));
  if (!in) throw ValidationError("truncated archive manifest: " + path);
  std::uint64_t length = 0;
  for (int i = 0; i < 8; ++i) {
    length |= static_cast<std::uint64_t>(static_cast<unsigned char>(header[i])) << (8 * i);
  }
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw ValidationError("truncated archive manifest: " + path);

  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad archive manifest: ") + e.what());
  }

  SequenceArchive archive;
  try {
    archive.manifest.schema_version = manifest.at("schema_version").get<int>();
    archive.manifest.validate();  // reject foreign schema before trusting the rest
    archive.manifest.fps = manifest.at("fps").get<double>();
    archive.manifest.skeleton_id = manifest.at("skeleton_id").get<std::string>();
    archive.manifest.subject_id = manifest.at("subject_id").get<std::string>();
    archive.manifest.view_count = manifest.at("view_count").get<int>();
    archive.manifest.keypoint_count = manifest.at("keypoint_count").get<int>();
    archive.manifest.frame_count = manifest.at("frame_count").get<int>();

    BlockReader blocks;
    for (const json& entry : manifest.at("blocks")) {
      const auto rows = entry.at("rows").get<Eigen::Index>();
      const auto cols = entry.at("cols").get<Eigen::Index>();
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> m(rows, cols);
      in.read(reinterpret_cast<char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
      if (!in) throw ValidationError("truncated archive block: " + path);
      blocks.blocks[entry.at("name").get<std::string>()] = m;
    }

    const int frames = archive.manifest.frame_count;
    const int views = archive.manifest.view_count;
    const int joints = archive.manifest.keypoint_count;
    archive.frames.resize(frames);
    archive.cameras.assign(frames, std::vector<CameraState>(views));

    const Eigen::MatrixXd& poses = blocks.get("poses", frames, kPoseDim);
    for (int t = 0; t < frames; ++t) {
      archive.frames[t].pose = WholeBodyPose::unflatten(poses.row(t));
      archive.frames[t].views.resize(views);
    }
    for (int v = 0; v < views; ++v) {
      const std::string suffix = "_v" + std::to_string(v);
      const Eigen::MatrixXd& points = blocks.get("k2d_points" + suffix, frames, 2 * joints);
      const Eigen::MatrixXd& conf = blocks.get("k2d_conf" + suffix, frames, joints);
      const Eigen::MatrixXd& cams = blocks.get("camera" + suffix, frames, 19);
      for (int t = 0; t < frames; ++t) {
        KeypointFrame2D& k2d = archive.frames[t].views[v];
        k2d.points.resize(joints, 2);
        for (int j = 0; j < joints; ++j) k2d.points.row(j) = points.row(t).segment<2>(2 * j);
        k2d.confidence = conf.row(t).transpose();
        archive.cameras[t][v] = camera_from_row(cams, t);
      }
    }
    {
      const Eigen::MatrixXd& points = blocks.get("k3d_points", frames, 3 * joints);
      const Eigen::MatrixXd& conf = blocks.get("k3d_conf", frames, joints);
      for (int t = 0; t < frames; ++t) {
        KeypointFrame3D& k3d = archive.frames[t].k3d;
        k3d.points.resize(joints, 3);
        for (int j = 0; j < joints; ++j) k3d.points.row(j) = points.row(t).segment<3>(3 * j);
        k3d.confidence = conf.row(t).transpose();
      }
    }
    if (blocks.has("bboxes")) {
      const Eigen::MatrixXd& m = blocks.get("bboxes", frames, 4);
      archive.bboxes.resize(frames);
      for (int t = 0; t < frames; ++t) {
        archive.bboxes[t].center = Vec2(m(t, 0), m(t, 1));
        archive.bboxes[t].size = Vec2(m(t, 2), m(t, 3));
        archive.bboxes[t].frame_index = t;
      }
    }
    if (blocks.has("signatures")) {
      const Eigen::Index bins = blocks.blocks.at("signatures").cols();
      const Eigen::MatrixXd& m = blocks.get("signatures", frames, bins);
      archive.signatures.resize(frames);
      for (int t = 0; t < frames; ++t) {
        archive.signatures[t].histogram = m.row(t).transpose();
        archive.signatures[t].frame_index = t;
      }
    }
    if (blocks.has("flow_u")) {
      const auto rows = manifest.at("flow_rows").get<Eigen::Index>();
      const auto cols = manifest.at("flow_cols").get<Eigen::Index>();
      const Eigen::MatrixXd& u = blocks.get("flow_u", frames - 1, rows * cols);
      const Eigen::MatrixXd& v = blocks.get("flow_v", frames - 1, rows * cols);
      archive.flows.resize(frames - 1);
      for (int t = 0; t + 1 < frames; ++t) {
        const Eigen::RowVectorXd ru = u.row(t);
        const Eigen::RowVectorXd rv = v.row(t);
        archive.flows[t].frame = t;
        archive.flows[t].u = Eigen::Map<
            const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            ru.data(), rows, cols);
        archive.flows[t].v = Eigen::Map<
            const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            rv.data(), rows, cols);
      }
    }
    if (blocks.has("contacts")) {
      archive.contacts = blocks.blocks.at("contacts");
    }
    if (manifest.contains("ground")) {
      const json& g = manifest.at("ground");
      archive.ground.normal = Vec3(g.at("normal").at(0).get<double>(),
                                   g.at("normal").at(1).get<double>(),
                                   g.at("normal").at(2).get<double>());
      archive.ground.offset = g.at("offset").get<double>();
      archive.has_ground = true;
    }
    if (manifest.contains("captions")) {
      archive.captions = manifest.at("captions").get<std::vector<std::string>>();
    }
    if (manifest.contains("emotion")) {
      archive.emotion = manifest.at("emotion").get<std::string>();
    }
    if (manifest.contains("tracklets")) {
      for (const json& entry : manifest.at("tracklets")) {
        Tracklet t;
        t.start_frame = entry.at("start").get<int>();
        t.end_frame = entry.at("end").get<int>();
        t.track_id = entry.at("track_id").get<int>();
        t.cut_reason = cut_from_name(entry.at("cut_reason").get<std::string>());
        archive.tracklets.push_back(t);
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad archive manifest: ") + e.what());
  }

  archive.validate();
  return archive;
}

SequenceArchive import_keypoints(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read keypoint file: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad keypoint file: ") + e.what());
  }

  SequenceArchive archive;
  try {
    archive.manifest.fps = doc.value("fps", 30.0);
    archive.manifest.subject_id = doc.value("subject_id", std::string("imported"));
    const json& frames = doc.at("frames");
    archive.manifest.frame_count = static_cast<int>(frames.size());
    for (const json& frame : frames) {
      SequenceFrame out;
      const json& views = frame.at("views");
      for (const json& view : views) {
        KeypointFrame2D k2d;
        k2d.points.resize(view.size(), 2);
        k2d.confidence.resize(view.size());
        for (size_t j = 0; j < view.size(); ++j) {
          k2d.points(j, 0) = view[j].at(0).get<double>();
          k2d.points(j, 1) = view[j].at(1).get<double>();
          k2d.confidence[j] = view[j].at(2).get<double>();
        }
        out.views.push_back(std::move(k2d));
      }
      if (out.views.empty()) throw ValidationError("imported frame has no views");
      const int joints = out.views[0].count();
      out.k3d.points = Eigen::MatrixXd::Zero(joints, 3);
      out.k3d.confidence = Eigen::VectorXd::Zero(joints);
      if (frame.contains("k3d")) {
        const json& k3d = frame.at("k3d");
        if (static_cast<int>(k3d.size()) != joints) {
          throw ValidationError("imported 3D keypoint count mismatch");
        }
        for (size_t j = 0; j < k3d.size(); ++j) {
          out.k3d.points(j, 0) = k3d[j].at(0).get<double>();
          out.k3d.points(j, 1) = k3d[j].at(1).get<double>();
          out.k3d.points(j, 2) = k3d[j].at(2).get<double>();
          out.k3d.confidence[j] = k3d[j].at(3).get<double>();
        }
      }
      if (archive.frames.empty()) {
        archive.manifest.view_count = static_cast<int>(out.views.size());
        archive.manifest.keypoint_count = joints;
      }
      archive.frames.push_back(std::move(out));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad keypoint file: ") + e.what());
  }
  archive.cameras.assign(archive.frames.size(),
                         std::vector<CameraState>(archive.manifest.view_count));
  archive.validate();
  return archive;
}

}  // namespace mocap
