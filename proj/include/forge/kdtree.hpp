#pragma once

#include "forge/types.hpp"

namespace forge {

/// Balanced KD-tree for exact Euclidean nearest-neighbour queries.
/// Results match a brute-force scan bit for bit; ties go to the lowest
/// point index.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points);

  struct Hit {
    int index = -1;
    double distance = std::numeric_limits<double>::infinity();
  };

  Hit nearest(const Vec3& query) const;
  size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

 private:
  struct Node {
    int point = -1;  // index into points_
    int axis = 0;
    int left = -1;
    int right = -1;
  };

  int build(int begin, int end, std::vector<int>& order);
  void search(int node, const Vec3& q, Hit& best) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

/// Exact nearest-neighbour distance, errors on an empty tree.
double nearest_distance(const KdTree& tree, const Vec3& x);

}  // namespace forge
