#pragma once

#include "forge/types.hpp"

namespace forge {

/// Similarity transform p -> (p - center) * scale used to map a cloud into
/// the unit cube. Kept so downstream consumers can undo the normalization.
struct UnitCubeTransform {
  double scale = 1.0;
  Vec3 center = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return (p - center) * scale; }
  Vec3 invert(const Vec3& p) const { return p / scale + center; }
};

struct NormalizedCloud {
  PointCloud cloud;
  UnitCubeTransform transform;
};

/// Uniformly scales and centers a cloud so its bounding box fits [-1,1]^3
/// with the largest axis spanning the full range. Aspect ratio is preserved:
/// a single scale 2/max_extent about the box center.
NormalizedCloud normalize_to_unit_cube(const PointCloud& cloud);

}  // namespace forge
