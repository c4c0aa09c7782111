#pragma once

#include <memory>
#include <vector>

#include "tiqf/kdtree.hpp"

namespace tiqf {

/// One matched (measurement, model point) pair. `model_index` refers into the
/// point set the match was made against.
struct CorrespondencePair {
  Vec3 scene_point;
  Vec3 model_point;
  int model_index;
};

/// Exact nearest-point index over a reference point set.
class NearestIndex {
 public:
  explicit NearestIndex(std::vector<Vec3> points) : tree_(std::move(points)) {}

  int nearest(const Vec3& q) const { return tree_.nearest(q); }
  const std::vector<Vec3>& points() const { return tree_.points(); }

 private:
  KdTree tree_;
};

NearestIndex build_index(std::vector<Vec3> points);

/// Pairs each measurement with its nearest model point (closest point rule),
/// preserving measurement order. Ties go to the lowest model index.
std::vector<CorrespondencePair> estimate_correspondences(
    const NearestIndex& model, const std::vector<Vec3>& measurements);

std::vector<CorrespondencePair> estimate_correspondences(
    const std::vector<Vec3>& model_at_estimate, const std::vector<Vec3>& measurements);

}  // namespace tiqf
