#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mocap/archive.hpp"
#include "mocap/augmentation.hpp"
#include "mocap/captioning.hpp"
#include "mocap/fitting.hpp"
#include "mocap/multiview.hpp"
#include "mocap/shots.hpp"
#include "mocap/smoothing.hpp"
#include "mocap/trajectory.hpp"

namespace mocap {

enum class Stage { Shots, Smooth, Fit, Mvba, Traj, Caption, Augment };

const char* stage_name(Stage stage);
Stage stage_from_name(const std::string& name);

// One declarative file drives every stage; CLI flags override single keys.
struct PipelineConfig {
  std::string input_path;
  std::string output_path;
  std::string skeleton_path;      // empty -> shipped template
  std::string codebook_path;      // empty -> shipped defaults
  std::string templates_path;     // empty -> shipped defaults
  std::string face_library_path;  // required by the augment stage
  std::uint64_t seed = 0;

  std::vector<Stage> stages;  // executed in declared order

  // shot detection
  double content_threshold = 0.4;
  double flow_threshold = 8.0;
  int min_tracklet_length = 2;
  TrackerParams tracker;

  // smoothing
  FilterSpec filter;

  // local fitting
  LossWeights fit_weights;
  OptimizerConfig fit_config;

  // multi-view bundle adjustment
  BundleWeights bundle_weights;
  BundleConfig bundle_config;

  // global trajectory
  TrajectoryWeights traj_weights;
  StageConfig traj_config;
  ContactModel contact;

  void validate() const;
};

// Structured-text config; unknown keys anywhere in the document are rejected.
PipelineConfig load_config(const std::string& path);
void save_config(const PipelineConfig& config, const std::string& path);

struct StageReport {
  std::string stage;
  double seconds = 0.0;
  std::vector<double> loss_trace;
  std::map<std::string, double> counts;
};

struct PipelineReport {
  std::vector<StageReport> stages;
};

void save_report(const PipelineReport& report, const std::string& path);

// Runs one stage on an in-memory archive; the same primitive backs both the
// per-stage CLI subcommands and the full orchestrator, so chained and
// sequential invocations are bit-identical.
SequenceArchive run_stage(const SequenceArchive& archive, Stage stage,
                          const PipelineConfig& config, StageReport* report = nullptr);

struct PipelineResult {
  SequenceArchive archive;
  PipelineReport report;
};

// Loads the input archive, applies config.stages in order, persists every
// stage's output next to output_path (suffix ".<stage>") plus the final
// archive at output_path itself. Structured errors name the failing stage.
PipelineResult run_pipeline(const PipelineConfig& config);

// ---------------------------------------------------------------------------
// Synthetic scenes

struct SceneSpec {
  int frames = 30;
  int views = 2;
  double fps = 30.0;
  Vec3 step = Vec3::Zero();      // per-frame root translation delta
  double turn = 0.0;             // yaw radians per frame
  double arm_swing = 0.0;        // sinusoidal shoulder swing amplitude, radians
  double noise_sigma = 0.0;      // Gaussian pixel noise on 2D keypoints
  int signature_bins = 16;
  std::vector<int> content_cuts;  // injected histogram jumps (frame indices)
  int flow_rows = 48;   // per-pixel grid covering the synthetic image
  int flow_cols = 64;

  void validate() const;
};

// Analytically consistent ground truth: FK joints, exact projections through
// the stored cameras, flow fields from the projected motion, and scripted
// foot contacts. The seed only drives the optional keypoint noise.
SequenceArchive generate_synthetic_scene(const SceneSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Trajectory metrics

struct TrajectoryMetrics {
  double ate = 0.0;  // camera position RMS after similarity alignment
  double rte = 0.0;  // root position RMS after similarity alignment
};

// Per-frame view-0 camera centers and pose root translations, each aligned to
// the truth by its own rigid + scale (Umeyama) transform. Frame count or view
// count mismatch is rejected.
TrajectoryMetrics evaluate_trajectories(const SequenceArchive& estimate,
                                        const SequenceArchive& truth);

}  // namespace mocap
