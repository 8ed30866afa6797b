#include "forge/convex_hull.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <unordered_map>
#include <vector>

namespace forge {
namespace {

struct Face {
  std::array<int, 3> v;    // vertex indices, wound CCW seen from outside
  std::array<int, 3> nbr;  // nbr[k] shares directed edge (v[k], v[k+1])
  Vec3 n;                  // unit outward normal
  double d = 0;            // plane: n . x = d
  std::vector<int> pts;    // conflict points strictly above the plane
  int far_idx = -1;
  double far_dist = 0;
  bool alive = true;
};

struct Builder {
  const std::vector<Vec3>& p;
  double eps;
  std::vector<Face> faces;
  Vec3 interior = Vec3::Zero();  // stable reference point inside the hull

  Builder(const std::vector<Vec3>& points, double tol) : p(points), eps(tol) {}

  double dist(const Face& f, int i) const { return f.n.dot(p[i]) - f.d; }

  Face make_face(int a, int b, int c, bool allow_flip) {
    Face f;
    f.v = {a, b, c};
    Vec3 n = (p[b] - p[a]).cross(p[c] - p[a]);
    const double len = n.norm();
    if (!(len > 0)) throw Error("build_hull: degenerate face");
    f.n = n / len;
    f.d = f.n.dot(p[a]);
    if (f.n.dot(interior) - f.d > 0) {
      if (!allow_flip) throw Error("build_hull: horizon winding broke");
      std::swap(f.v[1], f.v[2]);
      f.n = -f.n;
      f.d = -f.d;
    }
    return f;
  }

  void assign(Face& f, int i, double d) {
    f.pts.push_back(i);
    if (d > f.far_dist) {
      f.far_dist = d;
      f.far_idx = i;
    }
  }

  void run(std::array<int, 4> tetra) {
    interior = 0.25 * (p[tetra[0]] + p[tetra[1]] + p[tetra[2]] + p[tetra[3]]);
    faces.push_back(make_face(tetra[0], tetra[1], tetra[2], true));
    faces.push_back(make_face(tetra[0], tetra[1], tetra[3], true));
    faces.push_back(make_face(tetra[0], tetra[2], tetra[3], true));
    faces.push_back(make_face(tetra[1], tetra[2], tetra[3], true));
    link_initial();

    std::vector<char> used(p.size(), 0);
    for (int i : tetra) used[i] = 1;
    for (int i = 0; i < static_cast<int>(p.size()); ++i) {
      if (used[i]) continue;
      for (auto& f : faces) {
        const double d = dist(f, i);
        if (d > eps) {
          assign(f, i, d);
          break;
        }
      }
    }

    std::vector<int> stack;
    for (int i = 0; i < 4; ++i)
      if (!faces[i].pts.empty()) stack.push_back(i);

    std::vector<uint32_t> stamp(faces.size(), 0);
    uint32_t round = 0;
    std::vector<int> visible;
    std::vector<std::pair<int, int>> horizon;  // directed edge (a,b) of a dying face
    std::vector<int> horizon_keep;             // surviving face across that edge

    while (!stack.empty()) {
      const int fi = stack.back();
      stack.pop_back();
      if (!faces[fi].alive || faces[fi].pts.empty()) continue;
      const int apex = faces[fi].far_idx;

      // Faces visible from the apex, found by a flood fill over adjacency.
      // Edges between visible and hidden faces form the horizon loop.
      ++round;
      if (stamp.size() < faces.size()) stamp.resize(faces.size() * 2, 0);
      visible.assign(1, fi);
      horizon.clear();
      horizon_keep.clear();
      stamp[fi] = round;
      for (size_t h = 0; h < visible.size(); ++h) {
        const int cur = visible[h];
        for (int k = 0; k < 3; ++k) {
          const int g = faces[cur].nbr[k];
          if (stamp[g] == round) continue;
          if (dist(faces[g], apex) > eps) {
            stamp[g] = round;
            visible.push_back(g);
          } else {
            horizon.push_back({faces[cur].v[k], faces[cur].v[(k + 1) % 3]});
            horizon_keep.push_back(g);
          }
        }
      }

      // Tent of new faces (a, b, apex) over the horizon. Fan neighbours are
      // found through the shared horizon vertices; across the horizon the
      // kept face slot that pointed at a dying face is relinked.
      std::unordered_map<int, int> fan_by_start, fan_by_end;
      std::vector<int> fresh;
      fresh.reserve(horizon.size());
      for (size_t e = 0; e < horizon.size(); ++e) {
        const int a = horizon[e].first, b = horizon[e].second;
        Face nf = make_face(a, b, apex, false);
        nf.nbr[0] = horizon_keep[e];
        const int nfi = static_cast<int>(faces.size());
        fan_by_start[a] = nfi;
        fan_by_end[b] = nfi;
        faces.push_back(std::move(nf));
        fresh.push_back(nfi);
        Face& kept = faces[horizon_keep[e]];
        for (int k = 0; k < 3; ++k)
          if (kept.v[k] == b && kept.v[(k + 1) % 3] == a) kept.nbr[k] = nfi;
      }
      for (size_t e = 0; e < fresh.size(); ++e) {
        Face& nf = faces[fresh[e]];
        const int a = nf.v[0], b = nf.v[1];
        auto right = fan_by_start.find(b);  // shares edge (b, apex)
        auto left = fan_by_end.find(a);     // shares edge (apex, a)
        if (right == fan_by_start.end() || left == fan_by_end.end())
          throw Error("build_hull: open horizon");
        nf.nbr[1] = right->second;
        nf.nbr[2] = left->second;
      }

      // Re-home conflict points of retired faces.
      for (int vi : visible) {
        Face& dead = faces[vi];
        dead.alive = false;
        for (int pi : dead.pts) {
          if (pi == apex) continue;
          for (int nfi : fresh) {
            const double d = dist(faces[nfi], pi);
            if (d > eps) {
              assign(faces[nfi], pi, d);
              break;
            }
          }
        }
        dead.pts.clear();
        dead.pts.shrink_to_fit();
      }
      for (int nfi : fresh)
        if (!faces[nfi].pts.empty()) stack.push_back(nfi);
    }
  }

  void link_initial() {
    std::unordered_map<uint64_t, std::pair<int, int>> half;
    auto key = [](int a, int b) {
      return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) |
             static_cast<uint32_t>(b);
    };
    for (int fi = 0; fi < 4; ++fi)
      for (int k = 0; k < 3; ++k)
        half[key(faces[fi].v[k], faces[fi].v[(k + 1) % 3])] = {fi, k};
    for (int fi = 0; fi < 4; ++fi)
      for (int k = 0; k < 3; ++k) {
        auto it = half.find(key(faces[fi].v[(k + 1) % 3], faces[fi].v[k]));
        if (it == half.end()) throw Error("build_hull: open edge");
        faces[fi].nbr[k] = it->second.first;
      }
  }
};

std::array<int, 4> initial_tetrahedron(const std::vector<Vec3>& p, double eps) {
  std::array<int, 6> ext{};
  for (int axis = 0; axis < 3; ++axis) {
    int lo = 0, hi = 0;
    for (int i = 1; i < static_cast<int>(p.size()); ++i) {
      if (p[i][axis] < p[lo][axis]) lo = i;
      if (p[i][axis] > p[hi][axis]) hi = i;
    }
    ext[2 * axis] = lo;
    ext[2 * axis + 1] = hi;
  }
  int a = ext[0], b = ext[1];
  double best = -1;
  for (int i : ext)
    for (int j : ext) {
      const double d2 = (p[i] - p[j]).squaredNorm();
      if (d2 > best) {
        best = d2;
        a = i;
        b = j;
      }
    }
  if (!(std::sqrt(best) > eps)) throw Error("build_hull: degenerate hull");

  const Vec3 ab = (p[b] - p[a]).normalized();
  int c = -1;
  best = -1;
  for (int i = 0; i < static_cast<int>(p.size()); ++i) {
    const Vec3 r = p[i] - p[a];
    const double d2 = (r - ab.dot(r) * ab).squaredNorm();
    if (d2 > best) {
      best = d2;
      c = i;
    }
  }
  if (!(std::sqrt(best) > eps)) throw Error("build_hull: degenerate hull");

  const Vec3 n = (p[b] - p[a]).cross(p[c] - p[a]).normalized();
  int d = -1;
  best = -1;
  for (int i = 0; i < static_cast<int>(p.size()); ++i) {
    const double h = std::abs(n.dot(p[i] - p[a]));
    if (h > best) {
      best = h;
      d = i;
    }
  }
  if (!(best > eps)) throw Error("build_hull: degenerate hull");
  return {a, b, c, d};
}

}  // namespace

ConvexHull build_hull(const std::vector<Vec3>& points) {
  if (points.size() < 4) throw Error("build_hull: degenerate hull");
  for (const auto& q : points)
    if (!q.allFinite()) throw Error("build_hull: non-finite point");

  double scale = 0;
  for (const auto& q : points) scale = std::max(scale, q.cwiseAbs().maxCoeff());
  const double eps = std::max(1e-12, 1e-10 * scale);

  Builder builder(points, eps);
  builder.run(initial_tetrahedron(points, eps));

  // Compact alive faces, remap vertices, orient against the vertex centroid.
  ConvexHull hull;
  std::unordered_map<int, int> remap;
  for (const auto& f : builder.faces) {
    if (!f.alive) continue;
    std::array<int, 3> tri{};
    for (int k = 0; k < 3; ++k) {
      auto [it, fresh] =
          remap.try_emplace(f.v[k], static_cast<int>(hull.vertices.size()));
      if (fresh) hull.vertices.push_back(points[f.v[k]]);
      tri[k] = it->second;
    }
    hull.faces.push_back(tri);
  }
  if (hull.faces.size() < 4) throw Error("build_hull: degenerate hull");

  Vec3 centroid = Vec3::Zero();
  for (const auto& v : hull.vertices) centroid += v;
  centroid /= static_cast<double>(hull.vertices.size());

  const int nf = hull.face_count();
  hull.face_normals.resize(nf, 3);
  hull.face_offsets.resize(nf);
  for (int f = 0; f < nf; ++f) {
    auto& tri = hull.faces[f];
    Vec3 n = (hull.vertices[tri[1]] - hull.vertices[tri[0]])
                 .cross(hull.vertices[tri[2]] - hull.vertices[tri[0]]);
    const double len = n.norm();
    if (!(len > 0)) throw Error("build_hull: degenerate face");
    n /= len;
    double off = n.dot(hull.vertices[tri[0]]);
    if (n.dot(centroid) - off > 0) {
      std::swap(tri[1], tri[2]);
      n = -n;
      off = -off;
    }
    hull.face_normals.row(f) = n.transpose();
    hull.face_offsets[f] = off;
  }
  return hull;
}

ConvexHull build_hull(const PointCloud& cloud) { return build_hull(cloud.points); }

double violation_margin(const ConvexHull& hull, const Vec3& x) {
  return (hull.face_normals * x - hull.face_offsets).maxCoeff();
}

Eigen::VectorXd violation_margins(const ConvexHull& hull,
                                  const std::vector<Vec3>& points) {
  const int nq = static_cast<int>(points.size());
  const int nf = hull.face_count();
  Eigen::VectorXd out(nq);
  constexpr int kQTile = 2048;
  constexpr int kFTile = 4096;
  Eigen::MatrixXd q(3, std::min(kQTile, nq));
  Eigen::MatrixXd prod(std::min(kFTile, nf), std::min(kQTile, nq));
  for (int q0 = 0; q0 < nq; q0 += kQTile) {
    const int qn = std::min(kQTile, nq - q0);
    for (int i = 0; i < qn; ++i) q.col(i) = points[q0 + i];
    Eigen::VectorXd running =
        Eigen::VectorXd::Constant(qn, -std::numeric_limits<double>::infinity());
    for (int f0 = 0; f0 < nf; f0 += kFTile) {
      const int fn = std::min(kFTile, nf - f0);
      prod.topLeftCorner(fn, qn).noalias() =
          hull.face_normals.middleRows(f0, fn) * q.leftCols(qn);
      prod.topLeftCorner(fn, qn).colwise() -= hull.face_offsets.segment(f0, fn);
      running = running.cwiseMax(
          prod.topLeftCorner(fn, qn).colwise().maxCoeff().transpose());
    }
    out.segment(q0, qn) = running;
  }
  return out;
}

}  // namespace forge
