#include "forge/geometry.hpp"

namespace forge {

NormalizedCloud normalize_to_unit_cube(const PointCloud& cloud) {
  if (cloud.empty()) throw Error("normalize_to_unit_cube: empty cloud");
  Aabb box = cloud.bounds();
  const double extent = box.max_extent();
  if (!(extent > 0.0)) throw Error("normalize_to_unit_cube: degenerate extent");

  UnitCubeTransform t;
  t.scale = 2.0 / extent;
  t.center = box.center();

  NormalizedCloud out;
  out.transform = t;
  out.cloud.design_id = cloud.design_id;
  out.cloud.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.cloud.points.push_back(t.apply(p));
  return out;
}

}  // namespace forge
