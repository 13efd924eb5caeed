#include "mocap/pipeline.hpp"

#include <Eigen/Geometry>
#include <chrono>
#include <limits>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>
#include <set>

#include "mocap/camera.hpp"
#include "mocap/errors.hpp"
#include "mocap/kinematics.hpp"

namespace mocap {

namespace {

using nlohmann::json;

void expect_keys(const json& object, const std::string& context,
                 std::initializer_list<const char*> allowed) {
  for (const auto& item : object.items()) {
    bool known = false;
    for (const char* key : allowed) known = known || item.key() == key;
    if (!known) {
      throw ValidationError("unknown config key: " + context + "." + item.key());
    }
  }
}

template <typename T>
void read_if(const json& object, const char* key, T& value) {
  if (object.contains(key)) value = object.at(key).get<T>();
}

class StageTimer {
 public:
  explicit StageTimer(StageReport* report) : report_(report) {}
  ~StageTimer() {
    if (report_ == nullptr) return;
    const auto elapsed = std::chrono::steady_clock::now() - start_;
    report_->seconds = std::chrono::duration<double>(elapsed).count();
  }

 private:
  StageReport* report_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

Skeleton config_skeleton(const PipelineConfig& config) {
  return config.skeleton_path.empty() ? make_default_skeleton()
                                      : load_skeleton(config.skeleton_path);
}

SequenceArchive stage_shots(const SequenceArchive& input, const PipelineConfig& config,
                            StageReport* report) {
  SequenceArchive archive = input;
  const int frames = archive.manifest.frame_count;

  std::vector<int> content_cuts;
  if (!archive.signatures.empty()) {
    content_cuts = detect_content_shots(archive.signatures, config.content_threshold);
  }

  std::vector<std::optional<int>> track_ids(frames, 0);
  if (!archive.bboxes.empty()) {
    std::vector<std::vector<BBox>> detections(frames);
    for (int t = 0; t < frames; ++t) detections[t].push_back(archive.bboxes[t]);
    const auto tracked = track_subjects(detections, config.tracker);
    std::fill(track_ids.begin(), track_ids.end(), std::nullopt);
    std::set<int> ids;
    for (const auto& frame : tracked) {
      for (const BBox& box : frame) {
        track_ids[box.frame_index] = box.track_id;
        if (box.track_id) ids.insert(*box.track_id);
      }
    }
    if (report != nullptr) report->counts["tracks"] = static_cast<double>(ids.size());
  }

  std::vector<int> flow_cuts;
  if (!archive.flows.empty() && !archive.bboxes.empty()) {
    flow_cuts = detect_flow_shots(archive.flows, archive.bboxes, config.flow_threshold);
  }

  archive.tracklets = segment_sequence(frames, content_cuts, track_ids, flow_cuts,
                                       config.min_tracklet_length);
  if (report != nullptr) {
    report->counts["content_cuts"] = static_cast<double>(content_cuts.size());
    report->counts["flow_cuts"] = static_cast<double>(flow_cuts.size());
    report->counts["tracklets"] = static_cast<double>(archive.tracklets.size());
  }
  return archive;
}

SequenceArchive stage_smooth(const SequenceArchive& input, const PipelineConfig& config,
                             StageReport* report) {
  SequenceArchive archive = input;
  const int frames = archive.manifest.frame_count;
  for (int v = 0; v < archive.manifest.view_count; ++v) {
    std::vector<KeypointFrame2D> view(frames);
    for (int t = 0; t < frames; ++t) view[t] = archive.frames[t].views[v];
    view = smooth_keypoints(view, config.filter);
    for (int t = 0; t < frames; ++t) archive.frames[t].views[v] = view[t];
  }
  if (report != nullptr) {
    report->counts["views"] = archive.manifest.view_count;
    report->counts["frames"] = frames;
  }
  return archive;
}

SequenceArchive stage_fit(const SequenceArchive& input, const PipelineConfig& config,
                          StageReport* report) {
  const Skeleton skeleton = config_skeleton(config);
  if (input.manifest.keypoint_count != skeleton.joint_count()) {
    throw ValidationError("fitting requires joint-granularity keypoints");
  }
  SequenceArchive archive = input;
  const int frames = archive.manifest.frame_count;

  FittingTargets targets;
  PoseSequence init;
  for (int t = 0; t < frames; ++t) {
    targets.k2d.push_back(archive.frames[t].views.at(0));
    targets.k3d.push_back(archive.frames[t].k3d);
    targets.cameras.push_back(archive.cameras[t].at(0));
    init.push_back(archive.frames[t].pose);
  }

  const BodyShape shape;
  const FitResult result =
      fit_sequence(init, targets, config.fit_weights, skeleton, shape,
                   default_spheres(skeleton), JointLimits::loose(), config.fit_config);
  for (int t = 0; t < frames; ++t) archive.frames[t].pose = result.params[t];
  if (report != nullptr) {
    report->loss_trace = result.loss_trace;
    report->counts["frames"] = frames;
  }
  return archive;
}

SequenceArchive stage_mvba(const SequenceArchive& input, const PipelineConfig& config,
                           StageReport* report) {
  if (input.manifest.view_count < 2) {
    throw ValidationError("bundle adjustment requires at least two views");
  }
  SequenceArchive archive = input;
  const int frames = archive.manifest.frame_count;

  std::vector<MultiViewObservation> observations(frames);
  PointSequence init(frames);
  for (int t = 0; t < frames; ++t) {
    observations[t].views = archive.frames[t].views;
    observations[t].cameras = archive.cameras[t];
    observations[t].frame_index = t;
    init[t] = archive.frames[t].k3d.points;
  }

  BoneGraph bones;
  if (config.bundle_weights.lambda_b > 0) {
    const Skeleton skeleton = config_skeleton(config);
    if (input.manifest.keypoint_count != skeleton.joint_count()) {
      throw ValidationError("bone constraints require joint-granularity keypoints");
    }
    for (int j = 0; j < skeleton.joint_count(); ++j) {
      if (skeleton.parent[j] < 0 || skeleton.rest_offset[j].norm() <= 0) continue;
      bones.edges.emplace_back(skeleton.parent[j], j);
      bones.target_length.push_back(skeleton.rest_offset[j].norm());
    }
  }

  const BundleResult result =
      bundle_adjust(observations, init, bones, config.bundle_weights, config.bundle_config);
  for (int t = 0; t < frames; ++t) {
    archive.cameras[t] = result.cameras;
    archive.frames[t].k3d.points = result.points[t];
  }
  if (report != nullptr) {
    report->loss_trace = result.objective_trace;
    report->counts["cameras"] = static_cast<double>(result.cameras.size());
  }
  return archive;
}

SequenceArchive stage_traj(const SequenceArchive& input, const PipelineConfig& config,
                           StageReport* report) {
  const Skeleton skeleton = config_skeleton(config);
  if (input.manifest.keypoint_count != skeleton.joint_count()) {
    throw ValidationError("trajectory optimization requires joint-granularity keypoints");
  }
  SequenceArchive archive = input;
  const int frames = archive.manifest.frame_count;

  GlobalHumanState state;
  std::vector<KeypointFrame2D> k2d;
  std::vector<CameraState> cameras;
  for (int t = 0; t < frames; ++t) {
    state.phi.push_back(archive.frames[t].pose.global_orient);
    state.gamma.push_back(archive.frames[t].pose.root_translation);
    state.theta.push_back(archive.frames[t].pose);
    k2d.push_back(archive.frames[t].views.at(0));
    cameras.push_back(archive.cameras[t].at(0));
  }

  const Stage1Result stage1 =
      optimize_stage1(state, k2d, cameras, skeleton, config.traj_weights, config.traj_config);

  GroundPlane ground = archive.ground;
  if (!archive.has_ground) {
    // default plane: normal up, offset at the lowest observed foot joint
    ground.normal = Vec3::UnitY();
    double lowest = std::numeric_limits<double>::infinity();
    for (const JointMatrix& joints : stage1.joints) {
      for (const int j : foot_joint_indices(skeleton)) {
        lowest = std::min(lowest, joints.row(j).dot(ground.normal));
      }
    }
    ground.offset = lowest;
  }
  const Eigen::MatrixXd contacts =
      detect_foot_contact(stage1.joints, skeleton, ground, config.contact);

  const Stage2Result stage2 =
      optimize_stage2(stage1.state, k2d, cameras, skeleton, stage1.joints, contacts, ground,
                      config.contact, config.traj_weights, config.traj_config);

  for (int t = 0; t < frames; ++t) {
    archive.frames[t].pose.global_orient = stage2.state.phi[t];
    archive.frames[t].pose.root_translation = stage2.state.gamma[t];
  }
  archive.contacts = contacts;
  archive.ground = stage2.ground;
  archive.has_ground = true;
  if (report != nullptr) {
    report->loss_trace = stage1.objective_trace;
    report->loss_trace.insert(report->loss_trace.end(), stage2.objective_trace.begin(),
                              stage2.objective_trace.end());
    report->counts["contact_frames"] =
        (contacts.array() > 0).rowwise().any().cast<double>().sum();
  }
  return archive;
}

SequenceArchive stage_caption(const SequenceArchive& input, const PipelineConfig& config,
                              StageReport* report) {
  const Skeleton skeleton = config_skeleton(config);
  const PoseCodebook book = config.codebook_path.empty() ? make_default_codebook()
                                                         : load_codebook(config.codebook_path);
  const CaptionTemplates templates = config.templates_path.empty()
                                         ? make_default_templates()
                                         : load_templates(config.templates_path);
  const std::optional<std::string> emotion =
      input.emotion.empty() ? std::nullopt : std::optional<std::string>(input.emotion);

  SequenceArchive archive = input;
  const BodyShape shape;
  archive.captions.clear();
  for (int t = 0; t < archive.manifest.frame_count; ++t) {
    const JointMatrix joints = forward_kinematics(archive.frames[t].pose, shape, skeleton);
    const Description description =
        describe_frame(joints, skeleton, book, templates, emotion, config.seed + t);
    std::string caption;
    for (const std::string& sentence : description.sentences) {
      if (!caption.empty()) caption += " ";
      caption += sentence;
    }
    archive.captions.push_back(caption);
  }
  if (report != nullptr) {
    report->counts["captions"] = static_cast<double>(archive.captions.size());
  }
  return archive;
}

SequenceArchive stage_augment(const SequenceArchive& input, const PipelineConfig& config,
                              StageReport* report) {
  if (config.face_library_path.empty()) {
    throw ValidationError("augment stage requires a face library path");
  }
  const FaceLibrary library = load_face_library(config.face_library_path);
  SequenceArchive archive = input;
  const FaceAugmentation result = augment_face(archive.sequence(), library, config.seed);
  archive.set_sequence(result.sequence);
  archive.emotion = result.emotion;
  if (report != nullptr) {
    report->counts["library_entries"] = static_cast<double>(library.entries.size());
    report->counts["entry_index"] = result.entry_index;
  }
  return archive;
}

// Build a world-to-camera looking from `position` toward `target`.
CameraState look_at_camera(const Vec3& position, const Vec3& target) {
  const Vec3 forward = (target - position).normalized();
  Vec3 right = Vec3::UnitY().cross(forward);
  if (right.norm() < 1e-9) right = Vec3::UnitX();
  right.normalize();
  const Vec3 down = forward.cross(right);
  CameraState camera = CameraState::pinhole(40.0, 40.0, 32.0, 24.0);
  camera.rotation.row(0) = right;
  camera.rotation.row(1) = down;
  camera.rotation.row(2) = forward;
  camera.translation = -(camera.rotation * position);
  return camera;
}

Eigen::Matrix3Xd camera_centers(const SequenceArchive& archive) {
  Eigen::Matrix3Xd centers(3, archive.manifest.frame_count);
  for (int t = 0; t < archive.manifest.frame_count; ++t) {
    const CameraState& cam = archive.cameras[t].at(0);
    centers.col(t) = -cam.scale * (cam.rotation.transpose() * cam.translation);
  }
  return centers;
}

Eigen::Matrix3Xd root_positions(const SequenceArchive& archive) {
  Eigen::Matrix3Xd roots(3, archive.manifest.frame_count);
  for (int t = 0; t < archive.manifest.frame_count; ++t) {
    roots.col(t) = archive.frames[t].pose.root_translation;
  }
  return roots;
}

double aligned_rms(const Eigen::Matrix3Xd& estimate, const Eigen::Matrix3Xd& truth) {
  const Eigen::Matrix4d transform = Eigen::umeyama(estimate, truth, true);
  const Eigen::Matrix3Xd aligned =
      (transform.topLeftCorner<3, 3>() * estimate).colwise() +
      Vec3(transform.topRightCorner<3, 1>());
  return std::sqrt((aligned - truth).colwise().squaredNorm().mean());
}

}  // namespace

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::Shots: return "shots";
    case Stage::Smooth: return "smooth";
    case Stage::Fit: return "fit";
    case Stage::Mvba: return "mvba";
    case Stage::Traj: return "traj";
    case Stage::Caption: return "caption";
    case Stage::Augment: return "augment";
  }
  return "unknown";
}

Stage stage_from_name(const std::string& name) {
  if (name == "shots") return Stage::Shots;
  if (name == "smooth") return Stage::Smooth;
  if (name == "fit") return Stage::Fit;
  if (name == "mvba") return Stage::Mvba;
  if (name == "traj") return Stage::Traj;
  if (name == "caption") return Stage::Caption;
  if (name == "augment") return Stage::Augment;
  throw ValidationError("unknown pipeline stage: " + name);
}

void PipelineConfig::validate() const {
  if (!(content_threshold > 0) || !(flow_threshold > 0)) {
    throw ValidationError("shot thresholds must be positive");
  }
  if (min_tracklet_length < 1) throw ValidationError("min tracklet length must be >= 1");
  filter.validate();
  fit_weights.validate();
  bundle_weights.validate();
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config: " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad config: ") + e.what());
  }

  PipelineConfig config;
  try {
    expect_keys(doc, "config",
                {"input", "output", "skeleton", "codebook", "templates", "face_library",
                 "seed", "stages", "shots", "smooth", "fit", "mvba", "traj"});
    read_if(doc, "input", config.input_path);
    read_if(doc, "output", config.output_path);
    read_if(doc, "skeleton", config.skeleton_path);
    read_if(doc, "codebook", config.codebook_path);
    read_if(doc, "templates", config.templates_path);
    read_if(doc, "face_library", config.face_library_path);
    read_if(doc, "seed", config.seed);
    if (doc.contains("stages")) {
      for (const json& name : doc.at("stages")) {
        config.stages.push_back(stage_from_name(name.get<std::string>()));
      }
    }
    if (doc.contains("shots")) {
      const json& shots = doc.at("shots");
      expect_keys(shots, "shots",
                  {"content_threshold", "flow_threshold", "min_tracklet_length", "tracker"});
      read_if(shots, "content_threshold", config.content_threshold);
      read_if(shots, "flow_threshold", config.flow_threshold);
      read_if(shots, "min_tracklet_length", config.min_tracklet_length);
      if (shots.contains("tracker")) {
        const json& tracker = shots.at("tracker");
        expect_keys(tracker, "shots.tracker",
                    {"process_noise", "measurement_noise", "gate_distance", "max_missed"});
        read_if(tracker, "process_noise", config.tracker.process_noise);
        read_if(tracker, "measurement_noise", config.tracker.measurement_noise);
        read_if(tracker, "gate_distance", config.tracker.gate_distance);
        read_if(tracker, "max_missed", config.tracker.max_missed);
      }
    }
    if (doc.contains("smooth")) {
      const json& smooth = doc.at("smooth");
      expect_keys(smooth, "smooth", {"poly_order", "w_min", "w_max"});
      read_if(smooth, "poly_order", config.filter.poly_order);
      read_if(smooth, "w_min", config.filter.w_min);
      read_if(smooth, "w_max", config.filter.w_max);
    }
    if (doc.contains("fit")) {
      const json& fit = doc.at("fit");
      expect_keys(fit, "fit", {"weights", "optimizer"});
      if (fit.contains("weights")) {
        const json& weights = fit.at("weights");
        expect_keys(weights, "fit.weights",
                    {"lambda_joint", "lambda_smooth", "lambda_pen", "lambda_phy"});
        read_if(weights, "lambda_joint", config.fit_weights.lambda_joint);
        read_if(weights, "lambda_smooth", config.fit_weights.lambda_smooth);
        read_if(weights, "lambda_pen", config.fit_weights.lambda_pen);
        read_if(weights, "lambda_phy", config.fit_weights.lambda_phy);
      }
      if (fit.contains("optimizer")) {
        const json& opt = fit.at("optimizer");
        expect_keys(opt, "fit.optimizer",
                    {"iterations", "damping", "damping_increase", "damping_decrease",
                     "tolerance"});
        read_if(opt, "iterations", config.fit_config.iterations);
        read_if(opt, "damping", config.fit_config.damping);
        read_if(opt, "damping_increase", config.fit_config.damping_increase);
        read_if(opt, "damping_decrease", config.fit_config.damping_decrease);
        read_if(opt, "tolerance", config.fit_config.tolerance);
      }
    }
    if (doc.contains("mvba")) {
      const json& mvba = doc.at("mvba");
      expect_keys(mvba, "mvba", {"weights", "optimizer"});
      if (mvba.contains("weights")) {
        const json& weights = mvba.at("weights");
        expect_keys(weights, "mvba.weights", {"lambda_t", "lambda_b"});
        read_if(weights, "lambda_t", config.bundle_weights.lambda_t);
        read_if(weights, "lambda_b", config.bundle_weights.lambda_b);
      }
      if (mvba.contains("optimizer")) {
        const json& opt = mvba.at("optimizer");
        expect_keys(opt, "mvba.optimizer",
                    {"iterations", "damping", "damping_increase", "damping_decrease",
                     "tolerance"});
        read_if(opt, "iterations", config.bundle_config.iterations);
        read_if(opt, "damping", config.bundle_config.damping);
        read_if(opt, "damping_increase", config.bundle_config.damping_increase);
        read_if(opt, "damping_decrease", config.bundle_config.damping_decrease);
        read_if(opt, "tolerance", config.bundle_config.tolerance);
      }
    }
    if (doc.contains("traj")) {
      const json& traj = doc.at("traj");
      expect_keys(traj, "traj", {"weights", "optimizer", "contact"});
      if (traj.contains("weights")) {
        const json& weights = traj.at("weights");
        expect_keys(weights, "traj.weights",
                    {"lambda_data", "lambda_smooth", "lambda_skate", "lambda_contact"});
        read_if(weights, "lambda_data", config.traj_weights.lambda_data);
        read_if(weights, "lambda_smooth", config.traj_weights.lambda_smooth);
        read_if(weights, "lambda_skate", config.traj_weights.lambda_skate);
        read_if(weights, "lambda_contact", config.traj_weights.lambda_contact);
      }
      if (traj.contains("optimizer")) {
        const json& opt = traj.at("optimizer");
        expect_keys(opt, "traj.optimizer",
                    {"iterations", "damping", "damping_increase", "damping_decrease",
                     "tolerance"});
        read_if(opt, "iterations", config.traj_config.iterations);
        read_if(opt, "damping", config.traj_config.damping);
        read_if(opt, "damping_increase", config.traj_config.damping_increase);
        read_if(opt, "damping_decrease", config.traj_config.damping_decrease);
        read_if(opt, "tolerance", config.traj_config.tolerance);
      }
      if (traj.contains("contact")) {
        const json& contact = traj.at("contact");
        expect_keys(contact, "traj.contact",
                    {"height_threshold", "velocity_threshold", "contact_distance"});
        read_if(contact, "height_threshold", config.contact.height_threshold);
        read_if(contact, "velocity_threshold", config.contact.velocity_threshold);
        read_if(contact, "contact_distance", config.contact.contact_distance);
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad config: ") + e.what());
  }
  config.validate();
  return config;
}

void save_config(const PipelineConfig& config, const std::string& path) {
  config.validate();
  json doc;
  doc["input"] = config.input_path;
  doc["output"] = config.output_path;
  if (!config.skeleton_path.empty()) doc["skeleton"] = config.skeleton_path;
  if (!config.codebook_path.empty()) doc["codebook"] = config.codebook_path;
  if (!config.templates_path.empty()) doc["templates"] = config.templates_path;
  if (!config.face_library_path.empty()) doc["face_library"] = config.face_library_path;
  doc["seed"] = config.seed;
  json stages = json::array();
  for (const Stage stage : config.stages) stages.push_back(stage_name(stage));
  doc["stages"] = stages;
  doc["shots"] = {{"content_threshold", config.content_threshold},
                  {"flow_threshold", config.flow_threshold},
                  {"min_tracklet_length", config.min_tracklet_length},
                  {"tracker",
                   {{"process_noise", config.tracker.process_noise},
                    {"measurement_noise", config.tracker.measurement_noise},
                    {"gate_distance", config.tracker.gate_distance},
                    {"max_missed", config.tracker.max_missed}}}};
  doc["smooth"] = {{"poly_order", config.filter.poly_order},
                   {"w_min", config.filter.w_min},
                   {"w_max", config.filter.w_max}};
  doc["fit"] = {{"weights",
                 {{"lambda_joint", config.fit_weights.lambda_joint},
                  {"lambda_smooth", config.fit_weights.lambda_smooth},
                  {"lambda_pen", config.fit_weights.lambda_pen},
                  {"lambda_phy", config.fit_weights.lambda_phy}}},
                {"optimizer",
                 {{"iterations", config.fit_config.iterations},
                  {"damping", config.fit_config.damping},
                  {"damping_increase", config.fit_config.damping_increase},
                  {"damping_decrease", config.fit_config.damping_decrease},
                  {"tolerance", config.fit_config.tolerance}}}};
  doc["mvba"] = {{"weights",
                  {{"lambda_t", config.bundle_weights.lambda_t},
                   {"lambda_b", config.bundle_weights.lambda_b}}},
                 {"optimizer",
                  {{"iterations", config.bundle_config.iterations},
                   {"damping", config.bundle_config.damping},
                   {"damping_increase", config.bundle_config.damping_increase},
                   {"damping_decrease", config.bundle_config.damping_decrease},
                   {"tolerance", config.bundle_config.tolerance}}}};
  doc["traj"] = {{"weights",
                  {{"lambda_data", config.traj_weights.lambda_data},
                   {"lambda_smooth", config.traj_weights.lambda_smooth},
                   {"lambda_skate", config.traj_weights.lambda_skate},
                   {"lambda_contact", config.traj_weights.lambda_contact}}},
                 {"optimizer",
                  {{"iterations", config.traj_config.iterations},
                   {"damping", config.traj_config.damping},
                   {"damping_increase", config.traj_config.damping_increase},
                   {"damping_decrease", config.traj_config.damping_decrease},
                   {"tolerance", config.traj_config.tolerance}}},
                 {"contact",
                  {{"height_threshold", config.contact.height_threshold},
                   {"velocity_threshold", config.contact.velocity_threshold},
                   {"contact_distance", config.contact.contact_distance}}}};
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write config: " + path);
  out << doc.dump(2) << "\n";
}

void save_report(const PipelineReport& report, const std::string& path) {
  json stages = json::array();
  for (const StageReport& stage : report.stages) {
    json entry;
    entry["stage"] = stage.stage;
    entry["seconds"] = stage.seconds;
    entry["loss_trace"] = stage.loss_trace;
    entry["counts"] = stage.counts;
    stages.push_back(entry);
  }
  json doc;
  doc["schema"] = "mocap-report";
  doc["stages"] = stages;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write report: " + path);
  out << doc.dump(2) << "\n";
}

SequenceArchive run_stage(const SequenceArchive& archive, Stage stage,
                          const PipelineConfig& config, StageReport* report) {
  archive.validate();
  config.validate();
  if (report != nullptr) report->stage = stage_name(stage);
  StageTimer timer(report);
  switch (stage) {
    case Stage::Shots: return stage_shots(archive, config, report);
    case Stage::Smooth: return stage_smooth(archive, config, report);
    case Stage::Fit: return stage_fit(archive, config, report);
    case Stage::Mvba: return stage_mvba(archive, config, report);
    case Stage::Traj: return stage_traj(archive, config, report);
    case Stage::Caption: return stage_caption(archive, config, report);
    case Stage::Augment: return stage_augment(archive, config, report);
  }
  throw ValidationError("unknown pipeline stage");
}

PipelineResult run_pipeline(const PipelineConfig& config) {
  config.validate();
  if (config.input_path.empty()) throw ValidationError("pipeline config needs an input path");

  PipelineResult result;
  result.archive = load_archive(config.input_path);
  for (const Stage stage : config.stages) {
    StageReport report;
    try {
      result.archive = run_stage(result.archive, stage, config, &report);
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("stage ") + stage_name(stage) + ": " + e.what());
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string("stage ") + stage_name(stage) + ": " + e.what());
    }
    if (!config.output_path.empty()) {
      save_archive(result.archive, config.output_path + "." + stage_name(stage));
    }
    result.report.stages.push_back(std::move(report));
  }
  if (!config.output_path.empty()) save_archive(result.archive, config.output_path);
  return result;
}

void SceneSpec::validate() const {
  if (frames < 2) throw ValidationError("scene needs at least two frames");
  if (views < 1) throw ValidationError("scene needs at least one view");
  if (!(fps > 0)) throw ValidationError("scene fps must be positive");
  if (noise_sigma < 0) throw ValidationError("noise sigma must be non-negative");
  if (signature_bins < 2) throw ValidationError("scene needs at least two signature bins");
  if (flow_rows < 1 || flow_cols < 1) throw ValidationError("flow grid must be non-empty");
  for (const int cut : content_cuts) {
    if (cut < 1 || cut >= frames) throw ValidationError("content cut out of range");
  }
}

SequenceArchive generate_synthetic_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  const Skeleton skeleton = make_default_skeleton();
  const BodyShape shape;
  const int joints = skeleton.joint_count();

  SequenceArchive archive;
  archive.manifest.fps = spec.fps;
  archive.manifest.skeleton_id = skeleton.id;
  archive.manifest.subject_id = "synthetic";
  archive.manifest.view_count = spec.views;
  archive.manifest.keypoint_count = joints;
  archive.manifest.frame_count = spec.frames;

  std::vector<CameraState> rig;
  for (int v = 0; v < spec.views; ++v) {
    const double angle = 2.0 * M_PI * v / std::max(spec.views, 2);
    const Vec3 position(6.0 * std::sin(angle), 1.2, 6.0 * std::cos(angle));
    rig.push_back(look_at_camera(position, Vec3(0.0, 1.0, 0.0)));
  }

  const int lshoulder = skeleton.find_joint("left_shoulder");
  const int rshoulder = skeleton.find_joint("right_shoulder");
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<JointMatrix> truth_joints(spec.frames);
  archive.frames.resize(spec.frames);
  archive.cameras.assign(spec.frames, rig);
  for (int t = 0; t < spec.frames; ++t) {
    WholeBodyPose pose;
    pose.global_orient = Vec3(0.0, spec.turn * t, 0.0);
    pose.root_translation = Vec3(0.0, 0.95, 0.0) + spec.step * t;
    const double swing = spec.arm_swing * std::sin(0.3 * t);
    if (lshoulder >= 0 && skeleton.rot_index[lshoulder] >= 0) {
      pose.theta_body(0, skeleton.rot_index[lshoulder]) = swing;
    }
    if (rshoulder >= 0 && skeleton.rot_index[rshoulder] >= 0) {
      pose.theta_body(0, skeleton.rot_index[rshoulder]) = -swing;
    }
    truth_joints[t] = forward_kinematics(pose, shape, skeleton);

    SequenceFrame& frame = archive.frames[t];
    frame.pose = pose;
    frame.k3d.points = truth_joints[t];
    frame.k3d.confidence = Eigen::VectorXd::Ones(joints);
    for (int v = 0; v < spec.views; ++v) {
      KeypointFrame2D k2d;
      k2d.points.resize(joints, 2);
      for (int j = 0; j < joints; ++j) {
        Vec2 pixel = project_perspective(rig[v], truth_joints[t].row(j));
        if (spec.noise_sigma > 0) {
          pixel += spec.noise_sigma * Vec2(noise(gen), noise(gen));
        }
        k2d.points.row(j) = pixel.transpose();
      }
      k2d.confidence = Eigen::VectorXd::Ones(joints);
      frame.views.push_back(std::move(k2d));
    }

    BBox box;
    const Vec2 lo = archive.frames[t].views[0].points.colwise().minCoeff().transpose();
    const Vec2 hi = archive.frames[t].views[0].points.colwise().maxCoeff().transpose();
    box.center = 0.5 * (lo + hi);
    box.size = (hi - lo) + Vec2(4.0, 4.0);
    box.frame_index = t;
    archive.bboxes.push_back(box);
  }

  // content histograms: uniform base plus a segment-dependent bump
  archive.signatures.resize(spec.frames);
  int segment = 0;
  for (int t = 0; t < spec.frames; ++t) {
    if (std::find(spec.content_cuts.begin(), spec.content_cuts.end(), t) !=
        spec.content_cuts.end()) {
      ++segment;
    }
    Eigen::VectorXd histogram =
        Eigen::VectorXd::Constant(spec.signature_bins, 0.5 / spec.signature_bins);
    histogram[segment % spec.signature_bins] += 0.5;
    archive.signatures[t].histogram = histogram;
    archive.signatures[t].frame_index = t;
  }

  // uniform flow field: the mean projected joint motion in view 0
  archive.flows.resize(spec.frames - 1);
  for (int t = 0; t + 1 < spec.frames; ++t) {
    const Vec2 mean_flow = (archive.frames[t + 1].views[0].points -
                            archive.frames[t].views[0].points)
                               .colwise()
                               .mean()
                               .transpose();
    archive.flows[t].frame = t;
    archive.flows[t].u = Eigen::MatrixXd::Constant(spec.flow_rows, spec.flow_cols, mean_flow[0]);
    archive.flows[t].v = Eigen::MatrixXd::Constant(spec.flow_rows, spec.flow_cols, mean_flow[1]);
  }

  // scripted contacts against the plane through the lowest foot joint
  archive.ground.normal = Vec3::UnitY();
  double lowest = std::numeric_limits<double>::infinity();
  for (int t = 0; t < spec.frames; ++t) {
    for (const int j : foot_joint_indices(skeleton)) {
      lowest = std::min(lowest, truth_joints[t](j, 1));
    }
  }
  archive.ground.offset = lowest;
  archive.has_ground = true;
  archive.contacts = detect_foot_contact(truth_joints, skeleton, archive.ground, {});

  archive.validate();
  return archive;
}

TrajectoryMetrics evaluate_trajectories(const SequenceArchive& estimate,
                                        const SequenceArchive& truth) {
  estimate.validate();
  truth.validate();
  if (estimate.manifest.frame_count != truth.manifest.frame_count) {
    throw ValidationError("trajectory frame counts differ");
  }
  if (estimate.manifest.view_count < 1 || truth.manifest.view_count < 1) {
    throw ValidationError("trajectory evaluation needs at least one view");
  }
  TrajectoryMetrics metrics;
  metrics.ate = aligned_rms(camera_centers(estimate), camera_centers(truth));
  metrics.rte = aligned_rms(root_positions(estimate), root_positions(truth));
  return metrics;
}

}  // namespace mocap
