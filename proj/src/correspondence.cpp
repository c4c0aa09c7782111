#include "tiqf/correspondence.hpp"

#include <stdexcept>

namespace tiqf {

NearestIndex build_index(std::vector<Vec3> points) {
  if (points.empty()) {
    throw std::invalid_argument("build_index: empty point set");
  }
  return NearestIndex(std::move(points));
}

std::vector<CorrespondencePair> estimate_correspondences(
    const NearestIndex& model, const std::vector<Vec3>& measurements) {
  std::vector<CorrespondencePair> pairs;
  pairs.reserve(measurements.size());
  for (const Vec3& s : measurements) {
    const int idx = model.nearest(s);
    pairs.push_back({s, model.points()[static_cast<size_t>(idx)], idx});
  }
  return pairs;
}

std::vector<CorrespondencePair> estimate_correspondences(
    const std::vector<Vec3>& model_at_estimate, const std::vector<Vec3>& measurements) {
  return estimate_correspondences(build_index(model_at_estimate), measurements);
}

}  // namespace tiqf
