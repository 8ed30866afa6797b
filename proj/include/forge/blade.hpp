#pragma once

#include <filesystem>

#include "forge/types.hpp"

namespace forge {

/// Blade height in model units before normalization. The longest blade
/// axis is always z, so the normalized clouds span the full unit range
/// along z.
inline constexpr double kBladeHeight = 7.0;

/// Parametric blade: bottom section dimensions, blend radii, and the
/// top/bottom ratios K1..K3 deriving the top section.
struct BladeParams {
  double bld = 1.0;  // bottom large diameter
  double bsd = 0.5;  // bottom small diameter
  double bcd = 3.0;  // bottom center distance
  double bbr = 30.0;
  double btr = 30.0;
  double k1 = 0.5;
  double k2 = 0.5;
  double k3 = 0.5;
  double lr = 20.0;
  double tr = 20.0;
  uint64_t seed = 0;

  double top_ld() const { return k1 * bld; }
  double top_sd() const { return k2 * bsd; }
  double top_cd() const { return k3 * bcd; }

  /// Checks the published parameter ranges. Synthesis itself accepts any
  /// positive dimensions so that out-of-range limit cases stay testable.
  void validate_ranges() const;
};

/// Uniform independent draw of every parameter within its range.
BladeParams sample_params(uint64_t rng_seed);

/// Convex teardrop section: the 2D convex hull of a circle of diameter
/// large_d at the origin and a circle of diameter small_d centered at
/// (center_dist, 0). Closed CCW polyline with n_vertices vertices, all on
/// the two circular arcs. center_dist == 0 degenerates to the larger
/// circle; a circle strictly inside the other is an error.
std::vector<Vec2> build_profile(double large_d, double small_d,
                                double center_dist, int n_vertices = 256);

/// Samples the lofted solid between the bottom profile at z=0 and the
/// k-scaled top profile at z=kBladeHeight. The solid is the convex hull of
/// the two profile rings (linear loft). Layout of the returned cloud:
/// profile ring vertices, then area-weighted surface samples up to
/// n_surface total, then n_interior uniform interior samples.
PointCloud synthesize_cloud(const BladeParams& params, int n_surface,
                            int n_interior);

struct DatasetEntry {
  std::string design_id;
  std::string split;  // "train" | "test"
  BladeParams params;
  int n_surface = 0;
  int n_interior = 0;
  std::string file;
};

struct DatasetManifest {
  uint64_t base_seed = 0;
  std::vector<DatasetEntry> designs;
};

/// Writes design_<id>.ply per design plus manifest.json into out_dir.
DatasetManifest generate_dataset(int n_train, int n_test, uint64_t base_seed,
                                 const std::filesystem::path& out_dir,
                                 int n_surface, int n_interior);

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

}  // namespace forge
