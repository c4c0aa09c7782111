#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tiqf/experiment_io.hpp"
#include "tiqf/rng.hpp"

namespace {

using namespace tiqf;

struct CommonFlags {
  std::string mesh;
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy;
  std::optional<int> touches;
  std::optional<int> actions;
  std::optional<double> noise_sigma;
  std::optional<int> faces;
  std::string out_dir = ".";
};

void add_common_flags(CLI::App* cmd, CommonFlags& f, bool need_mesh = true) {
  auto* mesh_opt = cmd->add_option("--mesh", f.mesh, "Mesh file (ASCII OBJ or PLY)");
  if (need_mesh) {
    mesh_opt->check(CLI::ExistingFile);
  }
  cmd->add_option("--config", f.config_file, "Experiment config file (key = value)");
  cmd->add_option("--seed", f.seed, "Master seed (all randomness flows from it)");
  cmd->add_option("--strategy", f.strategy, "random|active");
  cmd->add_option("--touches", f.touches, "Maximum touches per trial");
  cmd->add_option("--actions", f.actions, "Candidate actions per touch");
  cmd->add_option("--noise-sigma", f.noise_sigma, "Touch noise sigma, meters");
  cmd->add_option("--faces", f.faces, "Bounding-box faces to probe: 5 or 6");
  cmd->add_option("--out-dir", f.out_dir, "Output directory");
}

ExperimentConfig resolve_config(const CommonFlags& f) {
  ExperimentConfig c;
  if (!f.config_file.empty()) {
    c = parse_config_file(f.config_file);
  }
  // CLI flags override file values.
  if (!f.mesh.empty()) c.mesh_path = f.mesh;
  if (f.seed) c.master_seed = *f.seed;
  if (f.strategy) c.strategy = strategy_from_name(*f.strategy);
  if (f.touches) c.n_touches_max = *f.touches;
  if (f.actions) c.n_actions = *f.actions;
  if (f.noise_sigma) c.noise_sigma = *f.noise_sigma;
  if (f.faces) apply_config_line(c, "faces", std::to_string(*f.faces));
  if (c.mesh_path.empty()) {
    throw std::invalid_argument("no mesh given (--mesh or config 'mesh')");
  }
  return c;
}

Scene load_scene(const ExperimentConfig& c) {
  return Scene(load_mesh(c.mesh_path), c.model_cloud_points);
}

std::string summary_text(const BatchResult& random_batch, const BatchResult& active_batch) {
  std::string out = "mean RMSE by touch count (rotation deg / translation cm)\n";
  for (int touch : {5, 10, 15, 20}) {
    for (const auto* batch : {&random_batch, &active_batch}) {
      for (const auto& row : batch->aggregate.rows) {
        if (row.touch_index == touch) {
          out += std::string(strategy_name(row.strategy)) + " touch " +
                 std::to_string(touch) + ": " + format_number(row.mean_rot) + " deg / " +
                 format_number(row.mean_trans) + " cm\n";
        }
      }
    }
  }
  return out;
}

int cmd_register(const CommonFlags& f, const std::string& measurements_path,
                 const std::string& init_pose_path) {
  ExperimentConfig c = resolve_config(f);
  const auto measurements = load_measurements_csv(measurements_path);
  Pose init = Pose::identity();
  Mat4 init_cov = Mat4::Identity();
  if (!init_pose_path.empty()) {
    const auto [pose, cov] = load_pose_file(init_pose_path);
    init = pose;
    if (cov) init_cov = *cov;
  }
  const Scene scene = load_scene(c);
  const RegistrationResult reg =
      register_pose(scene.index, measurements, init, init_cov, c.tiqf);
  const Quaternion q = reg.pose.rotation;
  std::printf("quaternion: %.9f %.9f %.9f %.9f\n", q.w, q.x, q.y, q.z);
  std::printf("translation: %.9f %.9f %.9f\n", reg.pose.translation.x(),
              reg.pose.translation.y(), reg.pose.translation.z());
  std::printf("cov_trace: %.9g\n", reg.cov.trace());
  std::printf("iterations: %d\n", reg.iterations);
  std::printf("residual_delta: %.9g %.9g\n", reg.delta.first, reg.delta.second);
  return 0;
}

int cmd_simulate(const CommonFlags& f, const std::vector<std::string>& raw_args) {
  const ExperimentConfig c = resolve_config(f);
  const std::filesystem::path dir(f.out_dir);
  std::filesystem::create_directories(dir);
  write_file((dir / "manifest.txt").string(), run_manifest(c, "simulate", raw_args));
  const Scene scene = load_scene(c);
  const BatchResult batch = run_batch(scene, c);
  write_file((dir / "trials.csv").string(), trials_csv(batch.trials));
  write_file((dir / "aggregate.csv").string(), aggregate_csv(batch.aggregate));
  std::printf("wrote %s and %s (%d trials, %d aborted)\n",
              (dir / "trials.csv").c_str(), (dir / "aggregate.csv").c_str(), c.n_trials,
              batch.aggregate.n_aborted);
  return 0;
}

int cmd_compare(const CommonFlags& f, const std::vector<std::string>& raw_args) {
  ExperimentConfig c = resolve_config(f);
  const std::filesystem::path dir(f.out_dir);
  std::filesystem::create_directories(dir);
  write_file((dir / "manifest.txt").string(), run_manifest(c, "compare", raw_args));
  const Scene scene = load_scene(c);
  // Both strategies share per-trial seeds, so ground truth and initial poses pair up.
  ExperimentConfig random_cfg = c;
  random_cfg.strategy = Strategy::kRandom;
  ExperimentConfig active_cfg = c;
  active_cfg.strategy = Strategy::kActive;
  const BatchResult random_batch = run_batch(scene, random_cfg);
  const BatchResult active_batch = run_batch(scene, active_cfg);

  std::vector<TrialResult> all = random_batch.trials;
  all.insert(all.end(), active_batch.trials.begin(), active_batch.trials.end());
  write_file((dir / "trials.csv").string(), trials_csv(all));
  AggregateResult agg = random_batch.aggregate;
  agg.rows.insert(agg.rows.end(), active_batch.aggregate.rows.begin(),
                  active_batch.aggregate.rows.end());
  agg.n_aborted += active_batch.aggregate.n_aborted;
  write_file((dir / "aggregate.csv").string(), aggregate_csv(agg));
  const std::string summary = summary_text(random_batch, active_batch);
  write_file((dir / "summary.txt").string(), summary);
  std::fputs(summary.c_str(), stdout);
  return 0;
}

int cmd_bench_actions(const CommonFlags& f) {
  ExperimentConfig c = resolve_config(f);
  const Scene scene = load_scene(c);
  // Fixed benchmark scenario: identity estimate, a handful of prior touches.
  const std::vector<Vec3> measurements = sample_surface_points(scene.mesh, 5, 99);
  const FilterState state;
  const Pose pose = Pose::identity();
  const Aabb box = bounding_box(scene.mesh);
  std::printf("n_actions seconds\n");
  for (const int n : {10, 100, 1000}) {
    const auto actions = generate_actions(box, n, all_faces(), derive_seed(c.master_seed, n));
    // Small candidate counts finish in microseconds; average enough
    // repetitions to keep timer noise out of the reported figure.
    const int reps = std::max(1, 1000 / n);
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) {
      (void)select_action_active(state, pose, scene.mesh, scene.index, measurements,
                                 actions, c.tiqf);
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() /
        reps;
    std::printf("%d %.6f\n", n, secs);
  }
  return 0;
}

int cmd_mesh_info(const CommonFlags& f) {
  ExperimentConfig c = resolve_config(f);
  std::vector<std::string> warnings;
  const TriangleMesh mesh = load_mesh(c.mesh_path, &warnings);
  for (const auto& w : warnings) {
    std::fprintf(stderr, "warning: %s\n", w.c_str());
  }
  const Aabb box = bounding_box(mesh);
  double area = 0.0;
  for (const auto& tri : mesh.faces) {
    area += triangle_area(mesh.vertices[tri[0]], mesh.vertices[tri[1]],
                          mesh.vertices[tri[2]]);
  }
  std::printf("vertices: %zu\nfaces: %zu\n", mesh.vertices.size(), mesh.faces.size());
  std::printf("bbox_min: %.6f %.6f %.6f\n", box.min.x(), box.min.y(), box.min.z());
  std::printf("bbox_max: %.6f %.6f %.6f\n", box.max.x(), box.max.y(), box.max.z());
  std::printf("surface_area: %.9g\n", area);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rigid pose estimation from sparse touch measurements with a "
               "translation-invariant quaternion filter and active touch selection"};
  app.require_subcommand(1);

  CommonFlags f;
  std::string measurements_path;
  std::string init_pose_path;

  auto* reg = app.add_subcommand("register", "One-shot registration of a measurement CSV");
  add_common_flags(reg, f);
  reg->add_option("--measurements", measurements_path, "CSV of x,y,z points (meters)")
      ->required()
      ->check(CLI::ExistingFile);
  reg->add_option("--init", init_pose_path, "Initial pose file")->check(CLI::ExistingFile);

  auto* sim = app.add_subcommand("simulate", "Run one strategy's trial batch");
  add_common_flags(sim, f);
  auto* cmp = app.add_subcommand("compare", "Random vs active trial batches");
  add_common_flags(cmp, f);
  auto* bench = app.add_subcommand("bench-actions", "Lookahead timing at 10/100/1000 actions");
  add_common_flags(bench, f);
  auto* info = app.add_subcommand("mesh-info", "Print mesh statistics");
  add_common_flags(info, f);

  std::vector<std::string> raw_args(argv + 1, argv + argc);
  try {
    app.parse(argc, argv);
    if (reg->parsed()) return cmd_register(f, measurements_path, init_pose_path);
    if (sim->parsed()) return cmd_simulate(f, raw_args);
    if (cmp->parsed()) return cmd_compare(f, raw_args);
    if (bench->parsed()) return cmd_bench_actions(f);
    if (info->parsed()) return cmd_mesh_info(f);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
