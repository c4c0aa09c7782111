#include "tiqf/experiment_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tiqf {

namespace {

constexpr const char* kVersion = "0.1.0";

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) {
    return "";
  }
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) {
      throw std::invalid_argument("");
    }
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad numeric value for '" + key + "': " + v);
  }
}

int to_int(const std::string& v, const std::string& key) {
  const double d = to_double(v, key);
  const int i = static_cast<int>(d);
  if (static_cast<double>(i) != d) {
    throw std::invalid_argument("config: expected integer for '" + key + "': " + v);
  }
  return i;
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void apply_config_line(ExperimentConfig& c, const std::string& key,
                       const std::string& value) {
  if (key == "mesh") {
    c.mesh_path = value;
  } else if (key == "strategy") {
    c.strategy = strategy_from_name(value);
  } else if (key == "noise_sigma") {
    c.noise_sigma = to_double(value, key);
  } else if (key == "n_touches_max") {
    c.n_touches_max = to_int(value, key);
  } else if (key == "n_actions") {
    c.n_actions = to_int(value, key);
  } else if (key == "n_trials") {
    c.n_trials = to_int(value, key);
  } else if (key == "init_trans_range") {
    c.init_trans_range = to_double(value, key);
  } else if (key == "init_rot_range_deg") {
    c.init_rot_range_deg = to_double(value, key);
  } else if (key == "perturb_deg") {
    c.perturb_deg = to_double(value, key);
  } else if (key == "stop_xi_x") {
    c.stop_xi_x = to_double(value, key);
  } else if (key == "stop_xi_t") {
    c.stop_xi_t = to_double(value, key);
  } else if (key == "master_seed") {
    c.master_seed = static_cast<std::uint64_t>(to_double(value, key));
  } else if (key == "faces") {
    c.faces_mode = to_int(value, key);
    if (c.faces_mode != 5 && c.faces_mode != 6) {
      throw std::invalid_argument("config: faces must be 5 or 6");
    }
  } else if (key == "model_cloud_points") {
    c.model_cloud_points = to_int(value, key);
  } else if (key == "rho") {
    c.tiqf.rho = to_double(value, key);
  } else if (key == "eps_x") {
    c.tiqf.eps_x = to_double(value, key);
  } else if (key == "eps_t") {
    c.tiqf.eps_t = to_double(value, key);
  } else if (key == "max_inner_iters") {
    c.tiqf.max_inner_iters = to_int(value, key);
  } else if (key == "max_pairs") {
    c.tiqf.max_pairs = to_int(value, key);
  } else if (key == "init_pose_file") {
    const auto [pose, cov] = load_pose_file(value);
    c.fixed_init_pose = pose;
    c.fixed_init_cov = cov;
  } else {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open config file: " + path);
  }
  ExperimentConfig config;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                  ": expected key = value");
    }
    apply_config_line(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

std::vector<Vec3> load_measurements_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open measurements file: " + path);
  }
  std::vector<Vec3> points;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') {
      continue;
    }
    if (lineno == 1 && t.find_first_not_of("xyz, \t") == std::string::npos) {
      continue;  // optional header row
    }
    std::istringstream ls(t);
    Vec3 p;
    char c1 = 0, c2 = 0;
    if (!(ls >> p.x() >> c1 >> p.y() >> c2 >> p.z()) || c1 != ',' || c2 != ',') {
      throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                  ": expected 'x,y,z'");
    }
    points.push_back(p);
  }
  if (points.empty()) {
    throw std::invalid_argument("no measurement rows in " + path);
  }
  return points;
}

std::pair<Pose, std::optional<Mat4>> load_pose_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open pose file: " + path);
  }
  Pose pose;
  if (!(in >> pose.rotation.w >> pose.rotation.x >> pose.rotation.y >> pose.rotation.z >>
        pose.translation.x() >> pose.translation.y() >> pose.translation.z())) {
    throw std::invalid_argument(path + ": expected 'qw qx qy qz' then 'tx ty tz'");
  }
  pose.rotation = quat_normalize(pose.rotation);
  Mat4 cov;
  bool have_cov = true;
  for (int r = 0; r < 4 && have_cov; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (!(in >> cov(r, c))) {
        if (r != 0 || c != 0) {
          throw std::invalid_argument(path + ": incomplete 4x4 covariance");
        }
        have_cov = false;
        break;
      }
    }
  }
  return {pose, have_cov ? std::optional<Mat4>(cov) : std::nullopt};
}

const char* const kTrialsCsvHeader =
    "trial_id,strategy,touch_index,rmse_rot_deg,rmse_trans_cm,kl_selected,"
    "n_correspondence_pairs,wall_ms";
const char* const kAggregateCsvHeader =
    "strategy,touch_index,mean_rot,lo_rot,hi_rot,mean_trans,lo_trans,hi_trans,"
    "n_trials_used";

std::string trials_csv(const std::vector<TrialResult>& trials) {
  std::string out = kTrialsCsvHeader;
  out += '\n';
  for (const auto& t : trials) {
    for (const auto& r : t.records) {
      out += std::to_string(t.trial_id);
      out += ',';
      out += strategy_name(t.strategy);
      out += ',';
      out += std::to_string(r.touch_index);
      out += ',';
      out += format_number(r.rmse_rot_deg);
      out += ',';
      out += format_number(r.rmse_trans_cm);
      out += ',';
      out += std::isnan(r.kl_selected) ? "nan" : format_number(r.kl_selected);
      out += ',';
      out += std::to_string(r.n_correspondence_pairs);
      out += ',';
      out += format_number(r.wall_ms);
      out += '\n';
    }
  }
  return out;
}

std::string aggregate_csv(const AggregateResult& aggregate) {
  std::string out = kAggregateCsvHeader;
  out += '\n';
  for (const auto& row : aggregate.rows) {
    out += strategy_name(row.strategy);
    out += ',';
    out += std::to_string(row.touch_index);
    out += ',';
    out += format_number(row.mean_rot);
    out += ',';
    out += format_number(row.lo_rot);
    out += ',';
    out += format_number(row.hi_rot);
    out += ',';
    out += format_number(row.mean_trans);
    out += ',';
    out += format_number(row.lo_trans);
    out += ',';
    out += format_number(row.hi_trans);
    out += ',';
    out += std::to_string(row.n_trials_used);
    out += '\n';
  }
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write file: " + path);
  }
  out << content;
}

std::string run_manifest(const ExperimentConfig& c, const std::string& command,
                         const std::vector<std::string>& args) {
  std::ostringstream out;
  out << "tool_version = " << kVersion << "\n"
      << "command = " << command << "\n";
  out << "args =";
  for (const auto& a : args) {
    out << " " << a;
  }
  out << "\n"
      << "mesh = " << c.mesh_path << "\n"
      << "strategy = " << strategy_name(c.strategy) << "\n"
      << "noise_sigma = " << format_number(c.noise_sigma) << "\n"
      << "n_touches_max = " << c.n_touches_max << "\n"
      << "n_actions = " << c.n_actions << "\n"
      << "n_trials = " << c.n_trials << "\n"
      << "init_trans_range = " << format_number(c.init_trans_range) << "\n"
      << "init_rot_range_deg = " << format_number(c.init_rot_range_deg) << "\n"
      << "perturb_deg = " << format_number(c.perturb_deg) << "\n"
      << "stop_xi_x = " << format_number(c.stop_xi_x) << "\n"
      << "stop_xi_t = " << format_number(c.stop_xi_t) << "\n"
      << "master_seed = " << c.master_seed << "\n"
      << "faces = " << c.faces_mode << "\n"
      << "model_cloud_points = " << c.model_cloud_points << "\n"
      << "rho = " << format_number(c.tiqf.rho) << "\n"
      << "eps_x = " << format_number(c.tiqf.eps_x) << "\n"
      << "eps_t = " << format_number(c.tiqf.eps_t) << "\n"
      << "max_inner_iters = " << c.tiqf.max_inner_iters << "\n"
      << "max_pairs = " << c.tiqf.max_pairs << "\n";
  return out.str();
}

}  // namespace tiqf
