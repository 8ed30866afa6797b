#pragma once

#include <filesystem>
#include <functional>

#include "forge/decoder.hpp"
#include "forge/types.hpp"

namespace forge {

/// Uniform scalar field over [-1,1]^3, lattice endpoints included.
struct ScalarGrid {
  int resolution = 0;  // samples per axis, >= 2
  Eigen::VectorXd values;  // x fastest, then y, then z

  double spacing() const { return 2.0 / (resolution - 1); }
  size_t index(int i, int j, int k) const {
    return static_cast<size_t>(i) +
           static_cast<size_t>(resolution) *
               (static_cast<size_t>(j) + static_cast<size_t>(resolution) * k);
  }
  double value(int i, int j, int k) const { return values[index(i, j, k)]; }
  Vec3 position(int i, int j, int k) const {
    const double h = spacing();
    return {-1.0 + h * i, -1.0 + h * j, -1.0 + h * k};
  }
};

ScalarGrid sample_grid(const std::function<double(const Vec3&)>& field, int resolution);
ScalarGrid sample_grid(const DecoderModel& model, const Eigen::VectorXf& z,
                       int resolution);

/// Trilinear interpolation of the grid at an arbitrary domain point.
double grid_trilinear(const ScalarGrid& grid, const Vec3& p);

void save_grid(const ScalarGrid& grid, const std::filesystem::path& raw_path);

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  bool watertight = false;

  bool empty() const { return triangles.empty(); }
};

struct McOptions {
  double iso = 0.0;
  /// Edges shorter than this fraction of a cell are collapsed after
  /// extraction; collapses keep surviving vertices on the isosurface.
  double min_edge_frac = 0.05;
};

/// Standard 256-case marching cubes with linear edge interpolation and
/// outward orientation (normals toward positive field). A grid without a
/// sign change yields an empty mesh.
TriangleMesh marching_cubes(const ScalarGrid& grid, const McOptions& opts = {});

struct WatertightReport {
  bool watertight = false;
  int boundary_edges = 0;
  int nonmanifold_edges = 0;
  int orientation_conflicts = 0;
  std::string reason;
};

/// Closed orientable 2-manifold test: every undirected edge is shared by
/// exactly two triangles traversing it in opposite directions.
WatertightReport check_watertight(const TriangleMesh& mesh);

double mesh_area(const TriangleMesh& mesh);
/// Signed volume by the divergence theorem; positive for outward-oriented
/// solids.
double mesh_volume(const TriangleMesh& mesh);

/// Area-weighted uniform samples on the mesh surface.
std::vector<Vec3> sample_mesh_surface(const TriangleMesh& mesh, int n,
                                      uint64_t seed);

/// Shape quality: (sqrt(3)/4) * longest_edge^2 / area, 1 for equilateral.
double max_triangle_aspect(const TriangleMesh& mesh);

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path);
TriangleMesh load_obj(const std::filesystem::path& path);
void save_stl(const TriangleMesh& mesh, const std::filesystem::path& path);

}  // namespace forge
