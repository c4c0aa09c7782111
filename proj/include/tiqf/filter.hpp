#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "tiqf/correspondence.hpp"
#include "tiqf/geometry.hpp"

namespace tiqf {

/// Gaussian belief over the rotation quaternion: mean x and 4x4 covariance.
/// Treated as an immutable value; every filter operation returns a new state.
struct FilterState {
  Vec4 x{1.0, 0.0, 0.0, 0.0};
  Mat4 cov{Mat4::Identity()};

  Quaternion quat() const { return Quaternion::from_coeffs(x); }
};

struct TiqfConfig {
  double rho = 0.01;             // correspondence-uncertainty constant
  double eps_x = 1e-4;           // quaternion-RMSE convergence threshold
  double eps_t = 1e-4;           // translation-RMSE threshold, meters
  int max_inner_iters = 50;      // per restart attempt
  int max_restarts = 12;         // perturbed reattempts after convergence
  /// Reset the covariance to its initial value every N inner iterations
  /// (0 = never). Accumulated information shrinks the correction steps
  /// harmonically; a periodic reset keeps shallow error valleys draining at
  /// full speed when registration quality matters more than the belief.
  int cov_reset_period = 0;
  double perturb_deg = 2.0;      // local-minimum escape magnitude, per Euler axis
  int max_pairs = 500;           // cap on translation-invariant pairs per update
  std::uint64_t pair_seed = 17;  // seed for pair subsampling when the cap binds
  /// Optional replacement for the candidate-ranking score used to pick among
  /// restart attempts (lower is better). Defaults to the mean squared
  /// nearest-neighbor distance of the measurements against the model cloud;
  /// callers that hold the actual mesh can supply the exact surface distance.
  std::function<double(const Pose&)> candidate_score;
  /// Optional exact closest-point rule: maps a model-frame query to the
  /// nearest point on the model surface. When set it replaces the sampled
  /// cloud lookup, removing the cloud-discretization bias.
  std::function<Vec3(const Vec3&)> closest_model_point;
};

/// One 4x4 pseudo-measurement block from a pair of correspondences. The true
/// rotation quaternion lies in its null space for noiseless data.
Mat4 build_h(const Vec3& s_i, const Vec3& s_j, const Vec3& o_i, const Vec3& o_j);

/// Vertical stack of 4x4 blocks, 4N x 4.
Eigen::MatrixXd stack_g(const std::vector<Mat4>& blocks);

/// State-dependent pseudo-measurement noise:
/// Sigma_h = rho/4 * [tr(xx^T + Sigma) I4 - (xx^T + Sigma)].
Mat4 measurement_noise(const FilterState& state, double rho);

/// Batch Kalman update with pseudo-measurement z = 0 and block-diagonal noise
/// (one sigma_h copy per 4-row block of G). Computed in information form,
/// which is algebraically identical to the gain form
/// K = Sigma G^T (G Sigma G^T + Sigma_blk)^-1 for invertible noise.
FilterState kalman_update(const FilterState& state, const Eigen::MatrixXd& g,
                          const Mat4& sigma_h);

/// Renormalizes the mean to unit length; covariance scales by 1/||x||^2.
FilterState normalize_state(const FilterState& state);

/// t = mean(s_i) - R(q) * mean(o_i).
Vec3 estimate_translation(const Quaternion& q, const std::vector<CorrespondencePair>& pairs);

/// Delta_LKF: (RMSE over sign-aligned quaternion components, RMSE over
/// translation components).
std::pair<double, double> convergence_delta(const Pose& prev, const Pose& curr);

struct RegistrationResult {
  Pose pose;
  Mat4 cov;
  int iterations = 0;
  std::pair<double, double> delta{0.0, 0.0};
};

/// Full registration loop: correspond, update, normalize, recover translation,
/// repeat until Delta_LKF drops below (eps_x, eps_t) or max_inner_iters.
/// `model` holds model-frame points; correspondences are found against the
/// model at the current pose estimate.
RegistrationResult register_pose(const NearestIndex& model,
                                 const std::vector<Vec3>& measurements,
                                 const Pose& init, const Mat4& init_cov,
                                 const TiqfConfig& config);

RegistrationResult register_pose(const std::vector<Vec3>& model,
                                 const std::vector<Vec3>& measurements,
                                 const Pose& init, const Mat4& init_cov,
                                 const TiqfConfig& config);

/// Builds the capped all-unordered-pairs block set for one correspondence set.
std::vector<Mat4> build_pair_blocks(const std::vector<CorrespondencePair>& pairs,
                                    int max_pairs, std::uint64_t seed);

}  // namespace tiqf
