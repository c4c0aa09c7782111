#pragma once

#include <cstddef>
#include <vector>

#include "tiqf/geometry.hpp"

namespace tiqf {

/// Exact nearest-neighbor index over a fixed 3D point set. Ties on distance
/// resolve to the smallest point index. Immutable after construction;
/// concurrent queries are safe.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points);

  int nearest(const Vec3& query) const;
  const std::vector<Vec3>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    int left = -1;
    int right = -1;
    int begin = 0;  // leaf payload: range into order_
    int end = 0;
  };

  struct Best {
    double d2;
    int index;
  };

  int build(int begin, int end);
  void search(int node, const Vec3& q, Best& best) const;

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace tiqf
