#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tiqf/active.hpp"
#include "tiqf/filter.hpp"
#include "tiqf/mesh.hpp"

namespace tiqf {

enum class Strategy { kRandom, kActive };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct ExperimentConfig {
  std::string mesh_path;
  Strategy strategy = Strategy::kActive;
  double noise_sigma = 5e-3;        // meters, per coordinate
  int n_touches_max = 20;
  int n_actions = 100;
  int n_trials = 100;
  double init_trans_range = 0.05;   // +/- meters per component
  double init_rot_range_deg = 30.0; // +/- degrees per Euler axis
  double perturb_deg = 2.0;
  double stop_xi_x = 1e-3;
  double stop_xi_t = 1e-3;          // meters
  std::uint64_t master_seed = 0;
  int faces_mode = 6;               // 6: all faces, 5: bottom excluded
  int model_cloud_points = 10000;   // densified model cloud size
  std::optional<Pose> fixed_init_pose;   // emulated vision estimate
  std::optional<Mat4> fixed_init_cov;
  TiqfConfig tiqf;
};

struct TouchRecord {
  int touch_index;
  double rmse_rot_deg;
  double rmse_trans_cm;
  double kl_selected;      // NaN for random strategy / fallback touches
  int n_correspondence_pairs;
  double wall_ms;          // always 0 in harness output (determinism contract)
};

struct TrialResult {
  int trial_id = 0;
  Strategy strategy = Strategy::kRandom;
  std::vector<TouchRecord> records;
  Pose final_pose;
  Pose gt_pose;
  bool aborted = false;
};

struct AggregateRow {
  Strategy strategy;
  int touch_index;
  double mean_rot, lo_rot, hi_rot;    // degrees, mean +/- 1 std
  double mean_trans, lo_trans, hi_trans;  // cm
  int n_trials_used;
};

struct AggregateResult {
  std::vector<AggregateRow> rows;
  int n_aborted = 0;
};

struct BatchResult {
  std::vector<TrialResult> trials;
  AggregateResult aggregate;
};

/// Mesh plus its densified model cloud and nearest-point index, loaded once
/// and shared across trials.
struct Scene {
  TriangleMesh mesh;
  std::vector<Vec3> model_points;
  NearestIndex index;

  Scene(TriangleMesh m, int n_model_points);
};

/// Translation components uniform in +/- trans_range, rotation from per-axis
/// intrinsic XYZ Euler angles uniform in +/- rot_range_deg.
Pose sample_initial_pose(std::uint64_t seed, double trans_range, double rot_range_deg);

/// Hit on the ground-truth mesh plus isotropic Gaussian noise per coordinate.
/// No RNG is consumed on a miss.
std::optional<Vec3> simulate_touch(const Action& action, const TriangleMesh& gt_mesh,
                                   double noise_sigma, std::uint64_t seed);

TrialResult run_trial(const Scene& scene, const ExperimentConfig& config,
                      std::uint64_t trial_seed, int trial_id);

AggregateResult aggregate_trials(const std::vector<TrialResult>& trials,
                                 int n_touches_max);

/// n_trials independent trials, seeds derived from master_seed. Trials execute
/// in parallel; results are identical to sequential execution.
BatchResult run_batch(const Scene& scene, const ExperimentConfig& config);

std::uint64_t trial_seed_for(std::uint64_t master_seed, int trial_id);

}  // namespace tiqf
