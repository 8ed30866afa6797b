#include "forge/blade.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "forge/cloud_io.hpp"
#include "forge/convex_hull.hpp"

namespace forge {
namespace {

using json = nlohmann::ordered_json;
constexpr double kPi = std::numbers::pi;

void check_range(double v, double lo, double hi, const char* name) {
  if (!(v >= lo && v <= hi))
    throw ValidationError(std::string("BladeParams: ") + name + " out of range");
}

}  // namespace

void BladeParams::validate_ranges() const {
  check_range(bld, 0.5, 2.0, "bld");
  check_range(bsd, 0.2, 1.0, "bsd");
  check_range(bcd, 2.0, 4.0, "bcd");
  check_range(bbr, 5.0, 70.0, "bbr");
  check_range(btr, 5.0, 70.0, "btr");
  check_range(k1, 0.2, 0.8, "k1");
  check_range(k2, 0.2, 0.8, "k2");
  check_range(k3, 0.2, 0.8, "k3");
  check_range(lr, 2.0, 50.0, "lr");
  check_range(tr, 2.0, 50.0, "tr");
}

BladeParams sample_params(uint64_t rng_seed) {
  Rng rng(rng_seed);
  BladeParams p;
  p.bld = rng.uniform(0.5, 2.0);
  p.bsd = rng.uniform(0.2, 1.0);
  p.bcd = rng.uniform(2.0, 4.0);
  p.bbr = rng.uniform(5.0, 70.0);
  p.btr = rng.uniform(5.0, 70.0);
  p.k1 = rng.uniform(0.2, 0.8);
  p.k2 = rng.uniform(0.2, 0.8);
  p.k3 = rng.uniform(0.2, 0.8);
  p.lr = rng.uniform(2.0, 50.0);
  p.tr = rng.uniform(2.0, 50.0);
  p.seed = rng_seed;
  return p;
}

std::vector<Vec2> build_profile(double large_d, double small_d,
                                double center_dist, int n_vertices) {
  if (!(large_d > 0) || !(small_d > 0))
    throw Error("build_profile: non-positive diameter");
  if (center_dist < 0) throw Error("build_profile: negative center distance");
  if (n_vertices < 16) throw Error("build_profile: too few vertices");

  const double R = 0.5 * large_d;
  const double r = 0.5 * small_d;
  const double d = center_dist;

  std::vector<Vec2> poly;
  poly.reserve(n_vertices);

  if (d == 0.0) {  // degenerate: hull collapses to the larger circle
    const double rad = std::max(R, r);
    for (int i = 0; i < n_vertices; ++i) {
      const double a = 2.0 * kPi * i / n_vertices;
      poly.emplace_back(rad * std::cos(a), rad * std::sin(a));
    }
    return poly;
  }
  if (d < std::abs(R - r))
    throw Error("build_profile: one circle inside the other");

  // Outer tangency angle: both tangent points sit at +-beta on their circle.
  const double beta = std::acos(std::clamp((R - r) / d, -1.0, 1.0));
  const double arc_a = 2.0 * (kPi - beta) * R;  // major arc on the large circle
  const double arc_b = 2.0 * beta * r;          // arc on the small circle

  int n_a = static_cast<int>(std::lround(n_vertices * arc_a / (arc_a + arc_b)));
  n_a = std::clamp(n_a, 2, n_vertices - 2);
  const int n_b = n_vertices - n_a;

  // Large-circle arc beta -> 2pi-beta (through pi), then small-circle arc
  // -beta -> beta (through 0). The two straight edges of the polyline are
  // the outer tangent segments.
  for (int i = 0; i < n_a; ++i) {
    const double a = beta + (2.0 * kPi - 2.0 * beta) * i / (n_a - 1);
    poly.emplace_back(R * std::cos(a), R * std::sin(a));
  }
  for (int i = 0; i < n_b; ++i) {
    const double a = -beta + 2.0 * beta * i / (n_b - 1);
    poly.emplace_back(d + r * std::cos(a), r * std::sin(a));
  }
  return poly;
}

PointCloud synthesize_cloud(const BladeParams& params, int n_surface,
                            int n_interior) {
  if (n_surface <= 0 || n_interior <= 0)
    throw Error("synthesize_cloud: sample counts must be positive");

  const auto bottom = build_profile(params.bld, params.bsd, params.bcd);
  const auto top =
      build_profile(params.top_ld(), params.top_sd(), params.top_cd());

  std::vector<Vec3> rings;
  rings.reserve(bottom.size() + top.size());
  for (const auto& q : bottom) rings.emplace_back(q.x(), q.y(), 0.0);
  for (const auto& q : top) rings.emplace_back(q.x(), q.y(), kBladeHeight);

  const ConvexHull hull = build_hull(rings);

  PointCloud cloud;
  cloud.design_id = "design";
  cloud.points.reserve(n_surface + n_interior);

  // Ring vertices first: they are the extreme points of the solid, so the
  // hull of the surface subset reproduces the solid exactly.
  const int n_ring =
      n_surface >= static_cast<int>(rings.size()) ? static_cast<int>(rings.size()) : 0;
  for (int i = 0; i < n_ring; ++i) cloud.points.push_back(rings[i]);

  Rng rng(substream_seed(params.seed, 0xb1ade));

  // Area-weighted random samples over the hull triangles.
  std::vector<double> cum(hull.faces.size());
  double total = 0;
  for (size_t f = 0; f < hull.faces.size(); ++f) {
    const auto& t = hull.faces[f];
    total += 0.5 * (hull.vertices[t[1]] - hull.vertices[t[0]])
                       .cross(hull.vertices[t[2]] - hull.vertices[t[0]])
                       .norm();
    cum[f] = total;
  }
  for (int i = n_ring; i < n_surface; ++i) {
    const double pick = rng.uniform(0.0, total);
    const size_t f =
        std::lower_bound(cum.begin(), cum.end(), pick) - cum.begin();
    const auto& t = hull.faces[std::min(f, hull.faces.size() - 1)];
    const double su = std::sqrt(rng.uniform(0.0, 1.0));
    const double v = rng.uniform(0.0, 1.0);
    cloud.points.push_back((1.0 - su) * hull.vertices[t[0]] +
                           su * (1.0 - v) * hull.vertices[t[1]] +
                           su * v * hull.vertices[t[2]]);
  }

  // Uniform interior samples by rejection from the bounding box.
  Aabb box;
  for (const auto& q : rings) box.extend(q);
  long attempts = 0;
  const long budget = 1000L * n_interior;
  int accepted = 0;
  while (accepted < n_interior) {
    if (++attempts > budget)
      throw Error("synthesize_cloud: interior sampling stalled");
    Vec3 cand(rng.uniform(box.min.x(), box.max.x()),
              rng.uniform(box.min.y(), box.max.y()),
              rng.uniform(box.min.z(), box.max.z()));
    if (violation_margin(hull, cand) <= 0.0) {
      cloud.points.push_back(cand);
      ++accepted;
    }
  }
  return cloud;
}

DatasetManifest generate_dataset(int n_train, int n_test, uint64_t base_seed,
                                 const std::filesystem::path& out_dir,
                                 int n_surface, int n_interior) {
  if (n_train < 1 || n_test < 0)
    throw ValidationError("generate_dataset: bad split sizes");
  std::filesystem::create_directories(out_dir);

  DatasetManifest manifest;
  manifest.base_seed = base_seed;
  const int total = n_train + n_test;
  for (int i = 0; i < total; ++i) {
    DatasetEntry e;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "design_%03d", i);
    e.design_id = buf;
    e.split = i < n_train ? "train" : "test";
    e.params = sample_params(substream_seed(base_seed, i));
    e.n_surface = n_surface;
    e.n_interior = n_interior;
    e.file = e.design_id + ".ply";

    PointCloud cloud = synthesize_cloud(e.params, n_surface, n_interior);
    cloud.design_id = e.design_id;
    save_ply(cloud, out_dir / e.file);
    manifest.designs.push_back(std::move(e));
  }
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  json j;
  j["base_seed"] = m.base_seed;
  j["designs"] = json::array();
  for (const auto& e : m.designs) {
    json d;
    d["design_id"] = e.design_id;
    d["split"] = e.split;
    d["file"] = e.file;
    d["n_surface"] = e.n_surface;
    d["n_interior"] = e.n_interior;
    d["params"] = {{"bld", e.params.bld}, {"bsd", e.params.bsd},
                   {"bcd", e.params.bcd}, {"bbr", e.params.bbr},
                   {"btr", e.params.btr}, {"k1", e.params.k1},
                   {"k2", e.params.k2},   {"k3", e.params.k3},
                   {"lr", e.params.lr},   {"tr", e.params.tr},
                   {"seed", e.params.seed}};
    j["designs"].push_back(std::move(d));
  }
  std::ofstream out(path);
  if (!out) throw Error("save_manifest: cannot open " + path.string());
  out << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_manifest: cannot open " + path.string());
  json j = json::parse(in);
  DatasetManifest m;
  m.base_seed = j.at("base_seed").get<uint64_t>();
  for (const auto& d : j.at("designs")) {
    DatasetEntry e;
    e.design_id = d.at("design_id").get<std::string>();
    e.split = d.at("split").get<std::string>();
    e.file = d.at("file").get<std::string>();
    e.n_surface = d.at("n_surface").get<int>();
    e.n_interior = d.at("n_interior").get<int>();
    const auto& p = d.at("params");
    e.params.bld = p.at("bld").get<double>();
    e.params.bsd = p.at("bsd").get<double>();
    e.params.bcd = p.at("bcd").get<double>();
    e.params.bbr = p.at("bbr").get<double>();
    e.params.btr = p.at("btr").get<double>();
    e.params.k1 = p.at("k1").get<double>();
    e.params.k2 = p.at("k2").get<double>();
    e.params.k3 = p.at("k3").get<double>();
    e.params.lr = p.at("lr").get<double>();
    e.params.tr = p.at("tr").get<double>();
    e.params.seed = p.at("seed").get<uint64_t>();
    m.designs.push_back(std::move(e));
  }
  return m;
}

}  // namespace forge
