#include "forge/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace forge {

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  for (const auto& p : points_)
    if (!p.allFinite()) throw Error("KdTree: non-finite point");
  if (points_.empty()) return;
  nodes_.reserve(points_.size());
  std::vector<int> order(points_.size());
  std::iota(order.begin(), order.end(), 0);
  root_ = build(0, static_cast<int>(order.size()), order);
}

int KdTree::build(int begin, int end, std::vector<int>& order) {
  if (begin >= end) return -1;
  Aabb box;
  for (int i = begin; i < end; ++i) box.extend(points_[order[i]]);
  int axis = 0;
  box.extents().maxCoeff(&axis);

  const int mid = begin + (end - begin) / 2;
  std::nth_element(order.begin() + begin, order.begin() + mid,
                   order.begin() + end, [&](int a, int b) {
                     if (points_[a][axis] != points_[b][axis])
                       return points_[a][axis] < points_[b][axis];
                     return a < b;
                   });

  Node node;
  node.point = order[mid];
  node.axis = axis;
  const int self = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  const int left = build(begin, mid, order);
  const int right = build(mid + 1, end, order);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

void KdTree::search(int node, const Vec3& q, Hit& best) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Vec3& p = points_[n.point];
  const double d = (q - p).norm();
  if (d < best.distance || (d == best.distance && n.point < best.index)) {
    best.distance = d;
    best.index = n.point;
  }
  const double delta = q[n.axis] - p[n.axis];
  const int near = delta < 0 ? n.left : n.right;
  const int far = delta < 0 ? n.right : n.left;
  search(near, q, best);
  if (std::abs(delta) <= best.distance) search(far, q, best);
}

KdTree::Hit KdTree::nearest(const Vec3& query) const {
  if (points_.empty()) throw Error("KdTree: query on empty tree");
  Hit best;
  search(root_, query, best);
  return best;
}

double nearest_distance(const KdTree& tree, const Vec3& x) {
  return tree.nearest(x).distance;
}

}  // namespace forge
