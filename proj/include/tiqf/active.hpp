#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "tiqf/filter.hpp"
#include "tiqf/mesh.hpp"

namespace tiqf {

/// Probe candidate: an inward axis-aligned ray starting outside one face of
/// the estimate's bounding box. Face ids: 0:-x 1:+x 2:-y 3:+y 4:-z 5:+z.
struct Action {
  Ray ray;
  int face_id;
};

struct LookaheadResult {
  Action action;
  std::optional<Vec3> hit;
  double kl;  // -inf for misses; never selectable
  FilterState posterior;
};

inline std::vector<int> all_faces() { return {0, 1, 2, 3, 4, 5}; }
/// Robot-emulation subset: bottom (-z) face excluded.
inline std::vector<int> reachable_faces() { return {0, 1, 2, 3, 5}; }

/// n actions sampled uniformly over the given face subset, start points offset
/// outward by 0.05 * box diagonal. Deterministic per seed.
std::vector<Action> generate_actions(const Aabb& box, int n,
                                     const std::vector<int>& faces,
                                     std::uint64_t seed);

/// Nearest ray-mesh hit on the model at the current estimate, or miss.
std::optional<Vec3> simulate_measurement(const Action& action,
                                         const TriangleMesh& mesh_at_estimate);

/// KL(post || prior) in nats for 4-D Gaussians, closed form.
double kl_divergence_gaussian(const FilterState& post, const FilterState& prior);

/// Depth of the bounded TIQF run inside each one-step lookahead.
constexpr int kLookaheadIters = 3;

/// One-step lookahead over all candidates: simulate the hypothetical touch on
/// the mesh at the current estimate, run a bounded TIQF update with the
/// augmented measurement set, score by KL(posterior || prior). Returns the
/// argmax action (ties to the lowest index) and every candidate's result.
/// Throws when every action misses.
std::pair<Action, std::vector<LookaheadResult>> select_action_active(
    const FilterState& state, const Pose& pose, const TriangleMesh& mesh,
    const NearestIndex& model, const std::vector<Vec3>& measurements,
    const std::vector<Action>& actions, const TiqfConfig& config);

Action select_action_random(const std::vector<Action>& actions, std::uint64_t seed);

}  // namespace tiqf
