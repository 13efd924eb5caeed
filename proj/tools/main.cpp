#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "mocap/errors.hpp"
#include "mocap/pipeline.hpp"

namespace {

using namespace mocap;

struct CommonArgs {
  std::string config_path;
  std::string input;
  std::string output;
  std::string report_path;
};

PipelineConfig resolve_config(const CommonArgs& args) {
  PipelineConfig config;
  if (!args.config_path.empty()) config = load_config(args.config_path);
  if (!args.input.empty()) config.input_path = args.input;
  if (!args.output.empty()) config.output_path = args.output;
  return config;
}

int run_single_stage(const CommonArgs& args, Stage stage) {
  PipelineConfig config = resolve_config(args);
  if (config.input_path.empty()) throw ValidationError("no input archive given");
  if (config.output_path.empty()) throw ValidationError("no output archive given");

  SequenceArchive archive = load_archive(config.input_path);
  StageReport report;
  archive = run_stage(archive, stage, config, &report);
  save_archive(archive, config.output_path);
  if (!args.report_path.empty()) {
    PipelineReport full;
    full.stages.push_back(report);
    save_report(full, args.report_path);
  }
  std::cout << stage_name(stage) << ": " << config.input_path << " -> "
            << config.output_path << "\n";
  return 0;
}

int run_full_pipeline(const CommonArgs& args) {
  const PipelineConfig config = resolve_config(args);
  const PipelineResult result = run_pipeline(config);
  if (!args.report_path.empty()) save_report(result.report, args.report_path);
  for (const StageReport& stage : result.report.stages) {
    std::cout << stage.stage << ": " << stage.seconds << " s";
    if (!stage.loss_trace.empty()) std::cout << ", final loss " << stage.loss_trace.back();
    std::cout << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"markerless motion-capture post-processing pipeline"};
  app.require_subcommand(1);
  app.fallthrough();  // allow global options after the subcommand name

  CommonArgs args;
  app.add_option("-c,--config", args.config_path, "pipeline config file")
      ->envname("MOCAP_CONFIG");

  Stage selected_stage = Stage::Shots;
  bool full_run = false;
  const std::vector<std::pair<Stage, std::string>> stage_commands = {
      {Stage::Shots, "shot detection and tracklet segmentation"},
      {Stage::Smooth, "confidence-adaptive keypoint smoothing"},
      {Stage::Fit, "local pose fitting"},
      {Stage::Mvba, "multi-view bundle adjustment"},
      {Stage::Traj, "global trajectory optimization"},
      {Stage::Caption, "rule-based pose captioning"},
      {Stage::Augment, "face/expression augmentation"},
  };
  for (const auto& [stage, description] : stage_commands) {
    CLI::App* cmd = app.add_subcommand(stage_name(stage), description);
    cmd->add_option("-i,--input", args.input, "input archive");
    cmd->add_option("-o,--output", args.output, "output archive");
    cmd->add_option("--report", args.report_path, "write a stage report here");
    cmd->callback([&, stage] { selected_stage = stage; });
  }

  CLI::App* run = app.add_subcommand("run", "run every stage listed in the config");
  run->add_option("-i,--input", args.input, "input archive");
  run->add_option("-o,--output", args.output, "output archive");
  run->add_option("--report", args.report_path, "write the pipeline report here");
  run->callback([&] { full_run = true; });

  std::string import_source;
  CLI::App* import = app.add_subcommand("import", "normalize a detector keypoint dump");
  import->add_option("-k,--keypoints", import_source, "structured-text keypoint file")
      ->required();
  import->add_option("-o,--output", args.output, "output archive")->required();

  std::string estimate_path, truth_path;
  CLI::App* eval = app.add_subcommand("eval", "trajectory metrics against ground truth");
  eval->add_option("-e,--estimate", estimate_path, "estimated archive")->required();
  eval->add_option("-t,--truth", truth_path, "ground-truth archive")->required();

  SceneSpec spec;
  std::uint64_t synth_seed = 0;
  std::vector<double> step{0.0, 0.0, 0.0};
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic ground-truth scene");
  synth->add_option("-o,--output", args.output, "output archive")->required();
  synth->add_option("--frames", spec.frames, "frame count");
  synth->add_option("--views", spec.views, "camera count");
  synth->add_option("--fps", spec.fps, "frames per second");
  synth->add_option("--step", step, "per-frame root translation (x y z)")->expected(3);
  synth->add_option("--turn", spec.turn, "yaw radians per frame");
  synth->add_option("--arm-swing", spec.arm_swing, "shoulder swing amplitude, radians");
  synth->add_option("--noise", spec.noise_sigma, "2D keypoint noise sigma, pixels");
  synth->add_option("--content-cuts", spec.content_cuts, "injected shot cut frames");
  synth->add_option("--seed", synth_seed, "noise seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad arguments are validation failures
  }

  try {
    if (import->parsed()) {
      const SequenceArchive archive = import_keypoints(import_source);
      save_archive(archive, args.output);
      std::cout << "imported " << archive.manifest.frame_count << " frames, "
                << archive.manifest.view_count << " views\n";
      return 0;
    }
    if (eval->parsed()) {
      const TrajectoryMetrics metrics =
          evaluate_trajectories(load_archive(estimate_path), load_archive(truth_path));
      std::printf("ATE %.9f\nRTE %.9f\n", metrics.ate, metrics.rte);
      return 0;
    }
    if (synth->parsed()) {
      spec.step = Vec3(step[0], step[1], step[2]);
      save_archive(generate_synthetic_scene(spec, synth_seed), args.output);
      std::cout << "wrote " << spec.frames << "-frame synthetic scene\n";
      return 0;
    }
    if (full_run) return run_full_pipeline(args);
    return run_single_stage(args, selected_stage);
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
