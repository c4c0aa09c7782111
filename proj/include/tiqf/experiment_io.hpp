#pragma once

#include <string>
#include <vector>

#include "tiqf/harness.hpp"

namespace tiqf {

/// Key/value experiment config document, '#' comments, one `key = value` per
/// line. Unknown keys are hard errors.
ExperimentConfig parse_config_file(const std::string& path);
void apply_config_line(ExperimentConfig& config, const std::string& key,
                       const std::string& value);

/// Measurement CSV: one `x,y,z` row per point, meters. Parse errors carry the
/// line number.
std::vector<Vec3> load_measurements_csv(const std::string& path);

/// Pose file: line 1 `qw qx qy qz`, line 2 `tx ty tz`, optional lines 3-6 a
/// 4x4 rotation covariance.
std::pair<Pose, std::optional<Mat4>> load_pose_file(const std::string& path);

extern const char* const kTrialsCsvHeader;
extern const char* const kAggregateCsvHeader;

std::string trials_csv(const std::vector<TrialResult>& trials);
std::string aggregate_csv(const AggregateResult& aggregate);

void write_file(const std::string& path, const std::string& content);

/// Resolved-config snapshot written before any trial executes.
std::string run_manifest(const ExperimentConfig& config, const std::string& command,
                         const std::vector<std::string>& args);

std::string format_number(double v);

}  // namespace tiqf
