#include "tiqf/active.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace tiqf {

namespace {

constexpr double kMarginFrac = 0.05;
constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

std::vector<Action> generate_actions(const Aabb& box, int n,
                                     const std::vector<int>& faces,
                                     std::uint64_t seed) {
  if (n < 1) {
    throw std::invalid_argument("generate_actions: n must be >= 1");
  }
  if (faces.empty()) {
    throw std::invalid_argument("generate_actions: empty face subset");
  }
  const Vec3 ext = box.extent();
  int degenerate_axes = 0;
  for (int a = 0; a < 3; ++a) {
    if (ext[a] <= 0.0) {
      ++degenerate_axes;
    }
  }
  if (degenerate_axes >= 2) {
    throw std::invalid_argument("generate_actions: degenerate bounding box");
  }
  for (int f : faces) {
    if (f < 0 || f > 5) {
      throw std::invalid_argument("generate_actions: face id out of range");
    }
  }
  const double margin = kMarginFrac * box.diagonal();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick_face(0, faces.size() - 1);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Action> actions;
  actions.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int face = faces[pick_face(rng)];
    const int axis = face / 2;
    const bool positive_side = (face % 2) == 1;
    Vec3 start;
    for (int a = 0; a < 3; ++a) {
      start[a] = box.min[a] + uni(rng) * ext[a];
    }
    start[axis] = positive_side ? box.max[axis] + margin : box.min[axis] - margin;
    Vec3 dir = Vec3::Zero();
    dir[axis] = positive_side ? -1.0 : 1.0;
    actions.push_back({Ray{start, dir}, face});
  }
  return actions;
}

std::optional<Vec3> simulate_measurement(const Action& action,
                                         const TriangleMesh& mesh_at_estimate) {
  const auto hit = ray_mesh_intersect(action.ray, mesh_at_estimate);
  if (!hit) {
    return std::nullopt;
  }
  return hit->point;
}

double kl_divergence_gaussian(const FilterState& post, const FilterState& prior) {
  const Mat4 jitter = 1e-12 * Mat4::Identity();
  const Eigen::SelfAdjointEigenSolver<Mat4> post_eig(post.cov);
  if (post_eig.eigenvalues().minCoeff() < -1e-10) {
    throw std::invalid_argument("kl_divergence_gaussian: posterior not PSD");
  }
  const Eigen::LDLT<Mat4> prior_ldlt(prior.cov + jitter);
  if (prior_ldlt.info() != Eigen::Success) {
    throw std::runtime_error("kl_divergence_gaussian: singular prior");
  }
  const Mat4 prior_inv = prior_ldlt.solve(Mat4::Identity());
  const double log_det_prior = std::log((prior.cov + jitter).determinant());
  const double log_det_post = std::log((post.cov + jitter).determinant());
  const Vec4 dmu = post.x - prior.x;
  const double kl = 0.5 * (log_det_prior - log_det_post + (prior_inv * post.cov).trace() -
                           4.0 + dmu.dot(prior_inv * dmu));
  if (!std::isfinite(kl)) {
    throw std::runtime_error("kl_divergence_gaussian: non-finite result");
  }
  return kl;
}

std::pair<Action, std::vector<LookaheadResult>> select_action_active(
    const FilterState& state, const Pose& pose, const TriangleMesh& mesh,
    const NearestIndex& model, const std::vector<Vec3>& measurements,
    const std::vector<Action>& actions, const TiqfConfig& config) {
  if (actions.empty()) {
    throw std::invalid_argument("select_action_active: no candidate actions");
  }
  if (measurements.size() < 2) {
    throw std::invalid_argument("select_action_active: need >= 2 prior measurements");
  }
  const TriangleMesh estimated = transform_mesh(mesh, pose);

  std::vector<LookaheadResult> results;
  results.reserve(actions.size());
  int best = -1;
  for (size_t i = 0; i < actions.size(); ++i) {
    LookaheadResult r{actions[i], std::nullopt, -kInf, state};
    r.hit = simulate_measurement(actions[i], estimated);
    if (r.hit) {
      // Update the carried belief with only the pairs the hypothetical
      // measurement introduces, iterating the bounded TIQF step with
      // refreshed correspondences. Every prior pair is already folded into
      // `state`, so the posterior differs from the prior exactly by the new
      // touch's information and the KL ranks candidates by it.
      std::vector<Vec3> hyp = measurements;
      hyp.push_back(*r.hit);
      try {
        FilterState st = state;
        Pose p = pose;
        for (int iter = 0; iter < kLookaheadIters; ++iter) {
          const Pose inv = pose_inverse(p);
          std::vector<CorrespondencePair> pairs;
          pairs.reserve(hyp.size());
          for (const Vec3& s : hyp) {
            const Vec3 q = apply_pose(inv, s);
            const int idx = model.nearest(q);
            pairs.push_back({s, model.points()[static_cast<size_t>(idx)], idx});
          }
          std::vector<Mat4> blocks;
          blocks.reserve(hyp.size() - 1);
          for (size_t j = 0; j + 1 < hyp.size(); ++j) {
            blocks.push_back(build_h(hyp.back(), hyp[j], pairs.back().model_point,
                                     pairs[j].model_point));
          }
          st = normalize_state(
              kalman_update(st, stack_g(blocks), measurement_noise(st, config.rho)));
          p.rotation = st.quat();
          p.translation = estimate_translation(p.rotation, pairs);
        }
        r.posterior = st;
        r.kl = kl_divergence_gaussian(st, state);
      } catch (const std::runtime_error&) {
        r.kl = -kInf;  // numerically degenerate lookahead: never selectable
      }
      if (std::isfinite(r.kl) &&
          (best < 0 || r.kl > results[static_cast<size_t>(best)].kl)) {
        best = static_cast<int>(i);
      }
    }
    results.push_back(std::move(r));
  }
  if (best < 0) {
    throw std::runtime_error("no informative action");
  }
  return {actions[static_cast<size_t>(best)], std::move(results)};
}

Action select_action_random(const std::vector<Action>& actions, std::uint64_t seed) {
  if (actions.empty()) {
    throw std::invalid_argument("select_action_random: empty action list");
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<size_t> pick(0, actions.size() - 1);
  return actions[pick(rng)];
}

}  // namespace tiqf
