#include "tiqf/filter.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace tiqf {

namespace {
constexpr double kJitter = 1e-12;
}

Mat4 build_h(const Vec3& s_i, const Vec3& s_j, const Vec3& o_i, const Vec3& o_j) {
  // Left-multiplication matrix of the pure quaternion s_ji minus the
  // right-multiplication matrix of o_ji; the aligning quaternion is in the
  // null space of the difference.
  const Vec3 s_ji = s_j - s_i;
  const Vec3 o_ji = o_j - o_i;
  const Vec3 diff = s_ji - o_ji;
  Mat4 h = Mat4::Zero();
  h.block<1, 3>(0, 1) = -diff.transpose();
  h.block<3, 1>(1, 0) = diff;
  h.block<3, 3>(1, 1) = skew(s_ji + o_ji);
  return h;
}

Eigen::MatrixXd stack_g(const std::vector<Mat4>& blocks) {
  if (blocks.empty()) {
    throw std::invalid_argument("stack_g: no measurement blocks");
  }
  Eigen::MatrixXd g(4 * static_cast<Eigen::Index>(blocks.size()), 4);
  for (size_t k = 0; k < blocks.size(); ++k) {
    g.block<4, 4>(4 * static_cast<Eigen::Index>(k), 0) = blocks[k];
  }
  return g;
}

Mat4 measurement_noise(const FilterState& state, double rho) {
  const Mat4 m = state.x * state.x.transpose() + state.cov;
  return 0.25 * rho * (m.trace() * Mat4::Identity() - m);
}

FilterState kalman_update(const FilterState& state, const Eigen::MatrixXd& g,
                          const Mat4& sigma_h) {
  if (g.rows() % 4 != 0 || g.cols() != 4 || g.rows() == 0) {
    throw std::invalid_argument("kalman_update: G must be 4N x 4");
  }
  if (g.isZero(0.0)) {
    return state;
  }
  const Mat4 s = sigma_h + kJitter * Mat4::Identity();
  const Eigen::LDLT<Mat4> s_ldlt(s);
  if (s_ldlt.info() != Eigen::Success) {
    throw std::runtime_error("kalman_update: singular measurement noise");
  }
  // Observed information from all blocks at once.
  Mat4 lambda_obs = Mat4::Zero();
  const Eigen::Index n_blocks = g.rows() / 4;
  for (Eigen::Index k = 0; k < n_blocks; ++k) {
    const Mat4 h = g.block<4, 4>(4 * k, 0);
    lambda_obs += h.transpose() * s_ldlt.solve(h);
  }
  const Mat4 prior = state.cov + kJitter * Mat4::Identity();
  const Eigen::LDLT<Mat4> prior_ldlt(prior);
  if (prior_ldlt.info() != Eigen::Success) {
    throw std::runtime_error("kalman_update: singular prior covariance");
  }
  const Mat4 lambda_post = prior_ldlt.solve(Mat4::Identity()) + lambda_obs;
  const Eigen::LDLT<Mat4> post_ldlt(lambda_post);
  if (post_ldlt.info() != Eigen::Success) {
    throw std::runtime_error("kalman_update: singular innovation");
  }
  FilterState out;
  out.cov = post_ldlt.solve(Mat4::Identity());
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  out.x = state.x - out.cov * (lambda_obs * state.x);
  if (!out.x.allFinite() || !out.cov.allFinite()) {
    throw std::runtime_error("kalman_update: non-finite result");
  }
  return out;
}

FilterState normalize_state(const FilterState& state) {
  const double n = state.x.norm();
  if (n <= 0.0 || !std::isfinite(n)) {
    throw std::invalid_argument("normalize_state: zero-norm state");
  }
  FilterState out{state.x / n, state.cov / (n * n)};
  if (!out.cov.allFinite()) {
    // Inconsistent data can drive the mean toward zero under strong
    // information; rescaling the covariance by 1/n^2 then overflows.
    throw std::runtime_error("normalize_state: degenerate mean norm");
  }
  return out;
}

Vec3 estimate_translation(const Quaternion& q, const std::vector<CorrespondencePair>& pairs) {
  if (pairs.empty()) {
    throw std::invalid_argument("estimate_translation: no correspondences");
  }
  Vec3 s_mean = Vec3::Zero();
  Vec3 o_mean = Vec3::Zero();
  for (const auto& p : pairs) {
    s_mean += p.scene_point;
    o_mean += p.model_point;
  }
  const double n = static_cast<double>(pairs.size());
  return s_mean / n - quat_to_matrix(q) * (o_mean / n);
}

std::pair<double, double> convergence_delta(const Pose& prev, const Pose& curr) {
  Vec4 qc = curr.rotation.coeffs();
  const Vec4 qp = prev.rotation.coeffs();
  if (qp.dot(qc) < 0.0) {
    qc = -qc;
  }
  const double dq = std::sqrt((qc - qp).squaredNorm() / 4.0);
  const double dt = std::sqrt((curr.translation - prev.translation).squaredNorm() / 3.0);
  return {dq, dt};
}

std::vector<Mat4> build_pair_blocks(const std::vector<CorrespondencePair>& pairs,
                                    int max_pairs, std::uint64_t seed) {
  const size_t n = pairs.size();
  std::vector<std::pair<int, int>> idx;
  idx.reserve(n * (n - 1) / 2);
  for (size_t i = 0; i + 1 < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      idx.emplace_back(static_cast<int>(i), static_cast<int>(j));
    }
  }
  if (max_pairs > 0 && idx.size() > static_cast<size_t>(max_pairs)) {
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<size_t>(max_pairs));
  }
  std::vector<Mat4> blocks;
  blocks.reserve(idx.size());
  for (const auto& [i, j] : idx) {
    blocks.push_back(build_h(pairs[static_cast<size_t>(i)].scene_point,
                             pairs[static_cast<size_t>(j)].scene_point,
                             pairs[static_cast<size_t>(i)].model_point,
                             pairs[static_cast<size_t>(j)].model_point));
  }
  return blocks;
}

RegistrationResult register_pose(const NearestIndex& model,
                                 const std::vector<Vec3>& measurements,
                                 const Pose& init, const Mat4& init_cov,
                                 const TiqfConfig& config) {
  if (measurements.size() < 2) {
    throw std::invalid_argument("register_pose: need at least 2 measurements");
  }
  FilterState state{quat_normalize(init.rotation).coeffs(), init_cov};
  Pose pose{state.quat(), init.translation};
  RegistrationResult result{pose, state.cov, 0, {0.0, 0.0}};

  // Nearest neighbors against the model at the current estimate, computed by
  // pulling the measurements into the model frame (rigid maps preserve
  // distances, so the match indices are identical). Also reports the mean
  // squared point-to-neighbor residual used to rank candidate solutions.
  const auto correspond = [&](const Pose& p) {
    const Pose inv = pose_inverse(p);
    std::vector<CorrespondencePair> pairs;
    pairs.reserve(measurements.size());
    double ss = 0.0;
    for (const Vec3& s : measurements) {
      const Vec3 m = apply_pose(inv, s);
      if (config.closest_model_point) {
        const Vec3 o = config.closest_model_point(m);
        ss += (m - o).squaredNorm();
        pairs.push_back({s, o, -1});
      } else {
        const int idx = model.nearest(m);
        const Vec3& o = model.points()[static_cast<size_t>(idx)];
        ss += (m - o).squaredNorm();
        pairs.push_back({s, o, idx});
      }
    }
    return std::pair<std::vector<CorrespondencePair>, double>(
        std::move(pairs), ss / static_cast<double>(measurements.size()));
  };

  // With sparse measurement sets the loop can settle in a wrong-assignment
  // local minimum. Each restart nudges the best rotation found so far by a
  // random rotation of growing amplitude and resets the covariance; the
  // lowest-residual candidate wins. Seeded, so registration is deterministic.
  std::mt19937_64 restart_rng(config.pair_seed ^ 0x9e3779b97f4a7c15ULL);
  const auto score = [&](const Pose& p) {
    return config.candidate_score ? config.candidate_score(p) : correspond(p).second;
  };
  // The initial pose is itself a candidate so a diverging first attempt can
  // never drag the search away from a good prior.
  double best_residual = score(pose);
  Pose best_pose = pose;
  Mat4 best_cov = state.cov;

  // Object scale for translation perturbations: RMS measurement spread.
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& s : measurements) {
    centroid += s;
  }
  centroid /= static_cast<double>(measurements.size());
  double spread2 = 0.0;
  for (const Vec3& s : measurements) {
    spread2 += (s - centroid).squaredNorm();
  }
  const double spread = std::sqrt(spread2 / static_cast<double>(measurements.size()));

  const auto offer_candidate = [&]() {
    const double residual = score(pose);
    // Hysteresis against basin-hopping on weak evidence: a candidate in a
    // distant orientation basin must beat the incumbent clearly, while local
    // refinements accept any improvement. With few points the residual of a
    // wrong symmetry basin can dip below the truth's by chance.
    const bool distant = rotation_error_deg(pose.rotation, best_pose.rotation) > 45.0;
    const double bar = distant ? 0.8 * best_residual : best_residual;
    if (residual < bar) {
      best_residual = residual;
      best_pose = pose;
      best_cov = state.cov;
    }
  };

  int total_iters = 0;
  for (int attempt = 0; attempt <= config.max_restarts; ++attempt) {
    if (attempt > 0) {
      if (config.perturb_deg <= 0.0) {
        break;
      }
      if (attempt <= 3) {
        // Near-symmetric objects have wrong basins a half-turn away, which
        // bounded random kicks can never reach. Probe the three body-axis
        // 180-degree flips of the best candidate explicitly and let the
        // residual ranking keep or reject them.
        Vec4 flip = Vec4::Zero();
        flip[attempt] = 1.0;  // pure quaternion: pi about body axis x/y/z
        pose = best_pose;
        pose.rotation =
            quat_normalize(quat_multiply(pose.rotation, Quaternion::from_coeffs(flip)));
        state = FilterState{pose.rotation.coeffs(), init_cov};
      } else {
        // Independent random amplitudes per attempt so all combinations of
        // coarse/fine rotation and translation kicks get explored.
        std::uniform_int_distribution<int> pick_scale(1, 10);
        const double amp = std::min(config.perturb_deg * pick_scale(restart_rng), 30.0) *
                           M_PI / 180.0;
        const double amp_t = std::min(config.perturb_deg * pick_scale(restart_rng), 30.0) *
                             (M_PI / 180.0) * spread;
        std::uniform_real_distribution<double> up(-amp, amp);
        std::uniform_real_distribution<double> ut(-amp_t, amp_t);
        const Quaternion dq = Quaternion::from_euler_xyz(up(restart_rng), up(restart_rng),
                                                         up(restart_rng));
        // Alternate between exploiting the best candidate and re-exploring
        // around the caller's prior: if the current best is a distant wrong
        // basin, bounded kicks from it alone could never escape back to a
        // solution near the prior.
        pose = (attempt % 2 == 0) ? best_pose : Pose{quat_normalize(init.rotation),
                                                     init.translation};
        pose.rotation = quat_normalize(quat_multiply(dq, pose.rotation));
        pose.translation += Vec3{ut(restart_rng), ut(restart_rng), ut(restart_rng)};
        state = FilterState{pose.rotation.coeffs(), init_cov};
      }
    }
    Pose anchor = pose;  // pose at the last covariance reset
    for (int iter = 0; iter < config.max_inner_iters; ++iter) {
      const Pose prev = pose;
      const auto [pairs, residual] = correspond(pose);
      (void)residual;
      const std::vector<Mat4> blocks =
          build_pair_blocks(pairs, config.max_pairs, config.pair_seed);
      const Mat4 sigma_h = measurement_noise(state, config.rho);
      try {
        state = normalize_state(kalman_update(state, stack_g(blocks), sigma_h));
      } catch (const std::exception&) {
        // Numerical breakdown (degenerate mean or non-invertible noise) ends
        // the attempt; the last good iterate still competes as a candidate.
        break;
      }
      pose.rotation = state.quat();
      pose.translation = estimate_translation(pose.rotation, pairs);

      result.iterations = ++total_iters;
      result.delta = convergence_delta(prev, pose);
      if (result.delta.first < config.eps_x && result.delta.second < config.eps_t) {
        // Accumulated information shrinks the steps; a stationary pose under
        // fresh covariance is required before the attempt counts as converged.
        const auto since_reset = convergence_delta(anchor, pose);
        if (since_reset.first < config.eps_x && since_reset.second < config.eps_t) {
          break;
        }
        state.cov = init_cov;
        anchor = pose;
      } else if (config.cov_reset_period > 0 &&
                 (iter + 1) % config.cov_reset_period == 0) {
        state.cov = init_cov;
        anchor = pose;
      }
    }
    offer_candidate();
  }
  result.pose = best_pose;
  result.cov = best_cov;
  return result;
}

RegistrationResult register_pose(const std::vector<Vec3>& model,
                                 const std::vector<Vec3>& measurements,
                                 const Pose& init, const Mat4& init_cov,
                                 const TiqfConfig& config) {
  return register_pose(build_index(model), measurements, init, init_cov, config);
}

}  // namespace tiqf
