#include "tiqf/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace tiqf {

namespace {
constexpr int kLeafSize = 8;
}

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.empty()) {
    throw std::invalid_argument("KdTree: empty point set");
  }
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * points_.size() / kLeafSize + 2);
  root_ = build(0, static_cast<int>(points_.size()));
}

int KdTree::build(int begin, int end) {
  Node node;
  if (end - begin <= kLeafSize) {
    node.begin = begin;
    node.end = end;
    // Leaves scan in index order so the lowest-index tie rule is immediate.
    std::sort(order_.begin() + begin, order_.begin() + end);
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
  }
  // Split along the axis of largest spread.
  Vec3 lo = points_[static_cast<size_t>(order_[static_cast<size_t>(begin)])];
  Vec3 hi = lo;
  for (int i = begin; i < end; ++i) {
    const Vec3& p = points_[static_cast<size_t>(order_[static_cast<size_t>(i)])];
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     return points_[static_cast<size_t>(a)][axis] <
                            points_[static_cast<size_t>(b)][axis];
                   });
  node.axis = axis;
  node.split = points_[static_cast<size_t>(order_[static_cast<size_t>(mid)])][axis];
  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[static_cast<size_t>(self)].left = left;
  nodes_[static_cast<size_t>(self)].right = right;
  return self;
}

void KdTree::search(int node_idx, const Vec3& q, Best& best) const {
  const Node& node = nodes_[static_cast<size_t>(node_idx)];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      const int idx = order_[static_cast<size_t>(i)];
      const double d2 = (points_[static_cast<size_t>(idx)] - q).squaredNorm();
      if (d2 < best.d2 || (d2 == best.d2 && idx < best.index)) {
        best.d2 = d2;
        best.index = idx;
      }
    }
    return;
  }
  const double delta = q[node.axis] - node.split;
  const int near = delta < 0.0 ? node.left : node.right;
  const int far = delta < 0.0 ? node.right : node.left;
  search(near, q, best);
  // <= keeps equal-distance candidates reachable for the tie rule.
  if (delta * delta <= best.d2) {
    search(far, q, best);
  }
}

int KdTree::nearest(const Vec3& query) const {
  Best best{std::numeric_limits<double>::infinity(), -1};
  search(root_, query, best);
  return best.index;
}

}  // namespace tiqf
