#pragma once

#include <filesystem>

#include "forge/convex_hull.hpp"
#include "forge/kdtree.hpp"
#include "forge/types.hpp"

namespace forge {

/// Labeling context for one normalized design: convex hull for the
/// inside/outside sign, KD-tree over the hull-adjacent cloud subset for
/// the distance magnitude.
struct SignedField {
  ConvexHull hull;
  KdTree surf_tree;
  Aabb cloud_bounds;
  double tol_sign = 0.0;
  double tol_surf = 1e-3;
};

/// One clamped SDF training pair.
struct SdfSample {
  Vec3 x;
  double s;
};

/// Per-design set of clamped SDF pairs, stored columnar.
struct SdfSampleSet {
  std::string design_id;
  std::vector<Vec3> points;
  std::vector<double> sdf;
  double delta = 0.1;
  double band_fraction = 0.5;
  double tol_sign = 0.0;
  double tol_surf = 1e-3;
  uint64_t seed = 0;

  size_t size() const { return points.size(); }
};

/// Queries may wander slightly past the unit cube; labels are kept inside
/// this guard band.
inline constexpr double kQueryGuard = 1.05;

/// Builds the hull and selects P_surf = {q : |m(q)| <= tol_surf}.
SignedField build_field(const PointCloud& cloud, double tol_sign = 0.0,
                        double tol_surf = 1e-3);

/// sigma(x) * d(x) without truncation: -1 sign iff m(x) <= tol_sign,
/// magnitude from the nearest surface-subset point.
double evaluate_unclamped(const SignedField& field, const Vec3& x);

/// clip(sigma(x) d(x), -delta, delta).
double evaluate(const SignedField& field, const Vec3& x, double delta);

/// Draws band_fraction*n samples by Gaussian perturbation of surface
/// points (sigma = delta/2, rejecting labels outside the band) and the
/// rest uniformly in the cloud box inflated by delta, clipped to the
/// query guard band. Deterministic per seed.
SdfSampleSet generate_samples(const SignedField& field, int n, double delta,
                              double band_fraction, uint64_t rng_seed);

/// Binary records: little-endian f32 x,y,z,s per sample, plus a JSON
/// sidecar with the set metadata.
void save_samples(const SdfSampleSet& set, const std::filesystem::path& bin_path);
SdfSampleSet load_samples(const std::filesystem::path& bin_path);

}  // namespace forge
