#include "forge/meshing.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "forge/mc_tables.hpp"

namespace forge {
namespace {

// Set after validating table orientation against analytic solids: the
// Bourke-layout tables emit windings whose normals point toward the
// negative (inside) region for our corner convention, so reverse them.
constexpr bool kReverseWinding = true;

}  // namespace

ScalarGrid sample_grid(const std::function<double(const Vec3&)>& field,
                       int resolution) {
  if (resolution < 2) throw Error("sample_grid: resolution must be >= 2");
  ScalarGrid grid;
  grid.resolution = resolution;
  grid.values.resize(static_cast<Eigen::Index>(resolution) * resolution * resolution);
  for (int k = 0; k < resolution; ++k)
    for (int j = 0; j < resolution; ++j)
      for (int i = 0; i < resolution; ++i)
        grid.values[grid.index(i, j, k)] = field(grid.position(i, j, k));
  return grid;
}

ScalarGrid sample_grid(const DecoderModel& model, const Eigen::VectorXf& z,
                       int resolution) {
  if (resolution < 2) throw Error("sample_grid: resolution must be >= 2");
  ScalarGrid grid;
  grid.resolution = resolution;
  grid.values.resize(static_cast<Eigen::Index>(resolution) * resolution * resolution);

  // One z-slab per forward pass keeps the batches GEMM-sized.
  const int k_dim = model.latent_dim;
  MatX<float> input(static_cast<Eigen::Index>(resolution) * resolution, k_dim + 3);
  for (Eigen::Index r = 0; r < input.rows(); ++r)
    input.row(r).head(k_dim) = z.transpose();
  for (int k = 0; k < resolution; ++k) {
    Eigen::Index r = 0;
    for (int j = 0; j < resolution; ++j)
      for (int i = 0; i < resolution; ++i, ++r) {
        const Vec3 p = grid.position(i, j, k);
        input(r, k_dim + 0) = static_cast<float>(p.x());
        input(r, k_dim + 1) = static_cast<float>(p.y());
        input(r, k_dim + 2) = static_cast<float>(p.z());
      }
    const MatX<float> out = model.mlp.forward(input, nn::Mode::kEval);
    for (Eigen::Index s = 0; s < out.rows(); ++s)
      grid.values[grid.index(static_cast<int>(s % resolution),
                             static_cast<int>(s / resolution), k)] = out(s, 0);
  }
  return grid;
}

double grid_trilinear(const ScalarGrid& grid, const Vec3& p) {
  const double h = grid.spacing();
  const int n = grid.resolution;
  Vec3 u = (p + Vec3::Ones()) / h;
  int i = std::clamp(static_cast<int>(std::floor(u.x())), 0, n - 2);
  int j = std::clamp(static_cast<int>(std::floor(u.y())), 0, n - 2);
  int k = std::clamp(static_cast<int>(std::floor(u.z())), 0, n - 2);
  const double fx = std::clamp(u.x() - i, 0.0, 1.0);
  const double fy = std::clamp(u.y() - j, 0.0, 1.0);
  const double fz = std::clamp(u.z() - k, 0.0, 1.0);
  double c00 = grid.value(i, j, k) * (1 - fx) + grid.value(i + 1, j, k) * fx;
  double c10 = grid.value(i, j + 1, k) * (1 - fx) + grid.value(i + 1, j + 1, k) * fx;
  double c01 = grid.value(i, j, k + 1) * (1 - fx) + grid.value(i + 1, j, k + 1) * fx;
  double c11 =
      grid.value(i, j + 1, k + 1) * (1 - fx) + grid.value(i + 1, j + 1, k + 1) * fx;
  return (c00 * (1 - fy) + c10 * fy) * (1 - fz) + (c01 * (1 - fy) + c11 * fy) * fz;
}

void save_grid(const ScalarGrid& grid, const std::filesystem::path& raw_path) {
  std::ofstream out(raw_path, std::ios::binary);
  if (!out) throw Error("save_grid: cannot open " + raw_path.string());
  std::vector<float> buf(grid.values.size());
  for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(grid.values[i]);
  out.write(reinterpret_cast<const char*>(buf.data()), buf.size() * sizeof(float));
  nlohmann::ordered_json j;
  j["resolution"] = grid.resolution;
  j["domain"] = {-1.0, 1.0};
  j["dtype"] = "f32";
  std::ofstream meta(raw_path.string() + ".json");
  meta << j.dump(2) << "\n";
}

namespace {

struct EdgeRef {
  int axis;  // 0 x, 1 y, 2 z
  int i, j, k;
};

uint64_t edge_key(const ScalarGrid& g, const EdgeRef& e) {
  return static_cast<uint64_t>(e.axis) * g.values.size() + g.index(e.i, e.j, e.k);
}

/// Collapses edges shorter than min_len (and slivers of ~zero area) with
/// half-edge collapses that respect the link condition, so closed meshes
/// stay closed and surviving vertices keep their extracted positions.
void collapse_short_edges(TriangleMesh& mesh, double min_len) {
  if (mesh.triangles.empty()) return;
  for (int pass = 0; pass < 8; ++pass) {
    const int nv = static_cast<int>(mesh.vertices.size());
    std::vector<std::vector<int>> tris_of(nv);
    for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t)
      for (int c = 0; c < 3; ++c) tris_of[mesh.triangles[t][c]].push_back(t);

    std::vector<char> locked(nv, 0);
    std::vector<char> dead(mesh.triangles.size(), 0);
    std::vector<int> remap(nv);
    for (int v = 0; v < nv; ++v) remap[v] = v;
    bool changed = false;

    auto neighbours = [&](int v, std::unordered_set<int>& out) {
      out.clear();
      for (int t : tris_of[v]) {
        if (dead[t]) continue;
        for (int c = 0; c < 3; ++c)
          if (mesh.triangles[t][c] != v) out.insert(mesh.triangles[t][c]);
      }
    };

    std::unordered_set<int> ring_u, ring_v;
    for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t) {
      if (dead[t]) continue;
      const auto tri = mesh.triangles[t];
      for (int c = 0; c < 3; ++c) {
        const int u = tri[c], v = tri[(c + 1) % 3];
        if (locked[u] || locked[v]) continue;
        const double len = (mesh.vertices[u] - mesh.vertices[v]).norm();
        const double area = 0.5 * (mesh.vertices[tri[1]] - mesh.vertices[tri[0]])
                                      .cross(mesh.vertices[tri[2]] - mesh.vertices[tri[0]])
                                      .norm();
        if (len >= min_len && area > 1e-12) continue;

        // Link condition: shared triangles == 2 and the rings of u and v
        // intersect exactly in the two opposite vertices.
        std::vector<int> shared;
        for (int tu : tris_of[u]) {
          if (dead[tu]) continue;
          const auto& q = mesh.triangles[tu];
          if (q[0] == v || q[1] == v || q[2] == v) shared.push_back(tu);
        }
        if (shared.size() != 2) continue;
        std::unordered_set<int> opposite;
        for (int ts : shared)
          for (int cc = 0; cc < 3; ++cc)
            if (mesh.triangles[ts][cc] != u && mesh.triangles[ts][cc] != v)
              opposite.insert(mesh.triangles[ts][cc]);
        neighbours(u, ring_u);
        neighbours(v, ring_v);
        std::vector<int> common;
        for (int x : ring_u)
          if (ring_v.count(x)) common.push_back(x);
        if (common.size() != opposite.size()) continue;
        bool ok = true;
        for (int x : common)
          if (!opposite.count(x)) ok = false;
        if (!ok) continue;

        // Collapse u -> v.
        for (int ts : shared) dead[ts] = 1;
        for (int tu : tris_of[u]) {
          if (dead[tu]) continue;
          for (int cc = 0; cc < 3; ++cc)
            if (mesh.triangles[tu][cc] == u) mesh.triangles[tu][cc] = v;
          tris_of[v].push_back(tu);
        }
        locked[u] = locked[v] = 1;
        for (int x : common) locked[x] = 1;
        changed = true;
        break;
      }
    }

    std::vector<std::array<int, 3>> kept;
    kept.reserve(mesh.triangles.size());
    for (int t = 0; t < static_cast<int>(mesh.triangles.size()); ++t)
      if (!dead[t]) kept.push_back(mesh.triangles[t]);
    mesh.triangles = std::move(kept);
    if (!changed) break;
  }

  // Drop unreferenced vertices.
  std::vector<int> used(mesh.vertices.size(), -1);
  std::vector<Vec3> verts;
  for (auto& tri : mesh.triangles)
    for (int c = 0; c < 3; ++c) {
      if (used[tri[c]] < 0) {
        used[tri[c]] = static_cast<int>(verts.size());
        verts.push_back(mesh.vertices[tri[c]]);
      }
      tri[c] = used[tri[c]];
    }
  mesh.vertices = std::move(verts);
}

}  // namespace

TriangleMesh marching_cubes(const ScalarGrid& grid, const McOptions& opts) {
  const int n = grid.resolution;
  if (n < 2) throw Error("marching_cubes: grid too small");
  for (Eigen::Index i = 0; i < grid.values.size(); ++i)
    if (!std::isfinite(grid.values[i]))
      throw Error("marching_cubes: non-finite grid value");

  const double lo = grid.values.minCoeff();
  const double hi = grid.values.maxCoeff();
  const double range = std::max(hi - lo, 1e-300);

  // Copy with two adjustments: exact-iso lattice values are nudged off the
  // level set, and boundary-layer values are forced weakly positive so
  // solids touching the domain wall close with a lid just inside it.
  Eigen::VectorXd v = grid.values;
  const double nudge = 1e-12 * range;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v[i] == opts.iso) v[i] = opts.iso + nudge;
  const double lid = 1e-9 * range;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        if (i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1) {
          double& val = v[grid.index(i, j, k)];
          val = std::max(val, opts.iso + lid);
        }

  TriangleMesh mesh;
  bool any_neg = false, any_pos = false;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    (v[i] < opts.iso ? any_neg : any_pos) = true;
  if (!any_neg || !any_pos) {
    std::cerr << "marching_cubes: field has no zero crossing, empty mesh\n";
    return mesh;
  }

  // Cell corner offsets and the lattice edge each cube edge maps to.
  static const int corner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                   {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  static const int edge_corners[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0},
                                          {4, 5}, {5, 6}, {6, 7}, {7, 4},
                                          {0, 4}, {1, 5}, {2, 6}, {3, 7}};
  static const int edge_axis[12] = {0, 1, 0, 1, 0, 1, 0, 1, 2, 2, 2, 2};

  std::unordered_map<uint64_t, int> vertex_of_edge;
  vertex_of_edge.reserve(static_cast<size_t>(n) * n * 8);

  double cv[8];
  Vec3 cp[8];
  for (int k = 0; k + 1 < n; ++k)
    for (int j = 0; j + 1 < n; ++j)
      for (int i = 0; i + 1 < n; ++i) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          cv[c] = v[grid.index(i + corner[c][0], j + corner[c][1], k + corner[c][2])];
          if (cv[c] < opts.iso) cube |= 1 << c;
        }
        const int edges = mc::kEdgeTable[cube];
        if (edges == 0) continue;

        int edge_vertex[12];
        for (int e = 0; e < 12; ++e) {
          if (!(edges & (1 << e))) continue;
          const int a = edge_corners[e][0], b = edge_corners[e][1];
          EdgeRef ref;
          ref.axis = edge_axis[e];
          ref.i = i + std::min(corner[a][0], corner[b][0]);
          ref.j = j + std::min(corner[a][1], corner[b][1]);
          ref.k = k + std::min(corner[a][2], corner[b][2]);
          const uint64_t key = edge_key(grid, ref);
          auto it = vertex_of_edge.find(key);
          if (it == vertex_of_edge.end()) {
            cp[a] = grid.position(i + corner[a][0], j + corner[a][1], k + corner[a][2]);
            cp[b] = grid.position(i + corner[b][0], j + corner[b][1], k + corner[b][2]);
            const double denom = cv[b] - cv[a];
            const double t =
                std::clamp(std::abs(denom) > 0 ? (opts.iso - cv[a]) / denom : 0.5,
                           0.0, 1.0);
            it = vertex_of_edge
                     .emplace(key, static_cast<int>(mesh.vertices.size()))
                     .first;
            mesh.vertices.push_back(cp[a] + t * (cp[b] - cp[a]));
          }
          edge_vertex[e] = it->second;
        }

        for (const int* tri = mc::kTriTable[cube]; *tri != -1; tri += 3) {
          std::array<int, 3> t3{edge_vertex[tri[0]], edge_vertex[tri[1]],
                                edge_vertex[tri[2]]};
          if (kReverseWinding) std::swap(t3[1], t3[2]);
          if (t3[0] == t3[1] || t3[1] == t3[2] || t3[0] == t3[2]) continue;
          mesh.triangles.push_back(t3);
        }
      }

  collapse_short_edges(mesh, opts.min_edge_frac * grid.spacing());
  mesh.watertight = check_watertight(mesh).watertight;
  return mesh;
}

WatertightReport check_watertight(const TriangleMesh& mesh) {
  WatertightReport report;
  if (mesh.triangles.empty()) {
    report.reason = "empty";
    return report;
  }
  // For each undirected edge count traversals in each direction.
  std::map<std::pair<int, int>, std::pair<int, int>> edges;
  for (const auto& tri : mesh.triangles)
    for (int c = 0; c < 3; ++c) {
      int a = tri[c], b = tri[(c + 1) % 3];
      if (a == b) {
        report.nonmanifold_edges++;
        continue;
      }
      const bool fwd = a < b;
      auto key = fwd ? std::make_pair(a, b) : std::make_pair(b, a);
      auto& slot = edges[key];
      (fwd ? slot.first : slot.second)++;
    }
  for (const auto& [key, dirs] : edges) {
    const int total = dirs.first + dirs.second;
    if (total == 1) {
      report.boundary_edges++;
    } else if (total > 2) {
      report.nonmanifold_edges++;
    } else if (dirs.first != 1 || dirs.second != 1) {
      report.orientation_conflicts++;
    }
  }
  report.watertight = report.boundary_edges == 0 && report.nonmanifold_edges == 0 &&
                      report.orientation_conflicts == 0;
  if (!report.watertight && report.reason.empty()) report.reason = "open or non-manifold";
  return report;
}

double mesh_area(const TriangleMesh& mesh) {
  double area = 0;
  for (const auto& t : mesh.triangles)
    area += 0.5 * (mesh.vertices[t[1]] - mesh.vertices[t[0]])
                      .cross(mesh.vertices[t[2]] - mesh.vertices[t[0]])
                      .norm();
  return area;
}

double mesh_volume(const TriangleMesh& mesh) {
  double six_vol = 0;
  for (const auto& t : mesh.triangles)
    six_vol += mesh.vertices[t[0]].dot(mesh.vertices[t[1]].cross(mesh.vertices[t[2]]));
  return six_vol / 6.0;
}

std::vector<Vec3> sample_mesh_surface(const TriangleMesh& mesh, int n,
                                      uint64_t seed) {
  if (mesh.triangles.empty()) throw Error("sample_mesh_surface: empty mesh");
  std::vector<double> cum(mesh.triangles.size());
  double total = 0;
  for (size_t f = 0; f < mesh.triangles.size(); ++f) {
    const auto& t = mesh.triangles[f];
    total += 0.5 * (mesh.vertices[t[1]] - mesh.vertices[t[0]])
                       .cross(mesh.vertices[t[2]] - mesh.vertices[t[0]])
                       .norm();
    cum[f] = total;
  }
  if (!(total > 0)) throw Error("sample_mesh_surface: degenerate mesh");

  Rng rng(seed);
  std::vector<Vec3> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double pick = rng.uniform(0.0, total);
    size_t f = std::lower_bound(cum.begin(), cum.end(), pick) - cum.begin();
    f = std::min(f, mesh.triangles.size() - 1);
    const auto& t = mesh.triangles[f];
    const double su = std::sqrt(rng.uniform(0.0, 1.0));
    const double v = rng.uniform(0.0, 1.0);
    out.push_back((1.0 - su) * mesh.vertices[t[0]] +
                  su * (1.0 - v) * mesh.vertices[t[1]] +
                  su * v * mesh.vertices[t[2]]);
  }
  return out;
}

double max_triangle_aspect(const TriangleMesh& mesh) {
  double worst = 0;
  for (const auto& t : mesh.triangles) {
    const double e0 = (mesh.vertices[t[1]] - mesh.vertices[t[0]]).norm();
    const double e1 = (mesh.vertices[t[2]] - mesh.vertices[t[1]]).norm();
    const double e2 = (mesh.vertices[t[0]] - mesh.vertices[t[2]]).norm();
    const double area = 0.5 * (mesh.vertices[t[1]] - mesh.vertices[t[0]])
                                  .cross(mesh.vertices[t[2]] - mesh.vertices[t[0]])
                                  .norm();
    const double emax = std::max({e0, e1, e2});
    if (area <= 0) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, 0.25 * std::sqrt(3.0) * emax * emax / area);
  }
  return worst;
}

void save_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_obj: cannot open " + path.string());
  char line[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(line, sizeof(line), "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    out << line;
  }
  for (const auto& t : mesh.triangles)
    out << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
}

TriangleMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_obj: cannot open " + path.string());
  TriangleMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("v ", 0) == 0) {
      Vec3 v;
      if (std::sscanf(line.c_str() + 2, "%lf %lf %lf", &v.x(), &v.y(), &v.z()) == 3)
        mesh.vertices.push_back(v);
    } else if (line.rfind("f ", 0) == 0) {
      int a, b, c;
      if (std::sscanf(line.c_str() + 2, "%d %d %d", &a, &b, &c) == 3)
        mesh.triangles.push_back({a - 1, b - 1, c - 1});
    }
  }
  mesh.watertight = check_watertight(mesh).watertight;
  return mesh;
}

void save_stl(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_stl: cannot open " + path.string());
  char header[80] = {};
  std::snprintf(header, sizeof(header), "forge stl");
  out.write(header, 80);
  const uint32_t count = static_cast<uint32_t>(mesh.triangles.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& t : mesh.triangles) {
    const Vec3 n = (mesh.vertices[t[1]] - mesh.vertices[t[0]])
                       .cross(mesh.vertices[t[2]] - mesh.vertices[t[0]])
                       .normalized();
    float rec[12] = {
        static_cast<float>(n.x()),
        static_cast<float>(n.y()),
        static_cast<float>(n.z()),
    };
    for (int c = 0; c < 3; ++c) {
      rec[3 + 3 * c + 0] = static_cast<float>(mesh.vertices[t[c]].x());
      rec[3 + 3 * c + 1] = static_cast<float>(mesh.vertices[t[c]].y());
      rec[3 + 3 * c + 2] = static_cast<float>(mesh.vertices[t[c]].z());
    }
    out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
    const uint16_t attr = 0;
    out.write(reinterpret_cast<const char*>(&attr), 2);
  }
}

}  // namespace forge
