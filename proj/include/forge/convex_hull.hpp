#pragma once

#include "forge/types.hpp"

namespace forge {

/// Convex hull of a point cloud as a closed triangular surface.
///
/// Faces store the supporting half-space data used for inside/outside
/// classification: unit outward normal n_f and offset b_f with
/// n_f . x <= b_f for every hull point x. Normals are oriented outward
/// against the hull-vertex centroid.
struct ConvexHull {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  Eigen::Matrix<double, Eigen::Dynamic, 3> face_normals;  // row f = n_f
  Eigen::VectorXd face_offsets;                           // b_f

  int face_count() const { return static_cast<int>(faces.size()); }
};

/// Quickhull over >= 4 non-coplanar points. Degenerate input (all points
/// collinear/coplanar within tolerance) raises Error("degenerate hull").
ConvexHull build_hull(const PointCloud& cloud);
ConvexHull build_hull(const std::vector<Vec3>& points);

/// m(x) = max_f (n_f . x - b_f); negative inside, positive outside.
double violation_margin(const ConvexHull& hull, const Vec3& x);

/// Batched margins, tiled so large hulls (10^5 faces) stay cache-friendly.
Eigen::VectorXd violation_margins(const ConvexHull& hull,
                                  const std::vector<Vec3>& points);

}  // namespace forge
