#include "forge/sdf_label.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace forge {
namespace {
using json = nlohmann::ordered_json;
}

SignedField build_field(const PointCloud& cloud, double tol_sign,
                        double tol_surf) {
  ConvexHull hull = build_hull(cloud);
  const Eigen::VectorXd margins = violation_margins(hull, cloud.points);

  std::vector<Vec3> surf;
  surf.reserve(cloud.size());
  for (int i = 0; i < margins.size(); ++i)
    if (std::abs(margins[i]) <= tol_surf) surf.push_back(cloud.points[i]);
  if (surf.empty()) throw Error("build_field: tol_surf too small");

  SignedField field{std::move(hull), KdTree(std::move(surf)), cloud.bounds(),
                    tol_sign, tol_surf};
  return field;
}

double evaluate_unclamped(const SignedField& field, const Vec3& x) {
  const double sign =
      violation_margin(field.hull, x) <= field.tol_sign ? -1.0 : 1.0;
  return sign * nearest_distance(field.surf_tree, x);
}

double evaluate(const SignedField& field, const Vec3& x, double delta) {
  if (!(delta > 0)) throw Error("evaluate: delta must be positive");
  return std::clamp(evaluate_unclamped(field, x), -delta, delta);
}

SdfSampleSet generate_samples(const SignedField& field, int n, double delta,
                              double band_fraction, uint64_t rng_seed) {
  if (n <= 0) throw Error("generate_samples: n must be positive");
  if (!(delta > 0)) throw Error("generate_samples: delta must be positive");
  if (band_fraction < 0 || band_fraction > 1)
    throw Error("generate_samples: band_fraction outside [0,1]");

  SdfSampleSet set;
  set.delta = delta;
  set.band_fraction = band_fraction;
  set.tol_sign = field.tol_sign;
  set.tol_surf = field.tol_surf;
  set.seed = rng_seed;
  set.points.reserve(n);
  set.sdf.reserve(n);

  Rng rng(rng_seed);
  const auto& surf = field.surf_tree.points();
  const Aabb guard{Vec3::Constant(-kQueryGuard), Vec3::Constant(kQueryGuard)};
  const Aabb box = field.cloud_bounds.inflated(delta).intersected(guard);

  const int n_band = static_cast<int>(std::lround(band_fraction * n));
  const double noise = 0.5 * delta;
  long attempts = 0;
  const long budget = 100L * std::max(n_band, 1);
  int accepted = 0;
  while (accepted < n_band) {
    if (++attempts > budget) throw Error("generate_samples: band sampling stalled");
    const Vec3& anchor = surf[rng.uniform_index(surf.size())];
    const Vec3 x = anchor + Vec3(rng.normal(0, noise), rng.normal(0, noise),
                                 rng.normal(0, noise));
    if (!guard.contains(x)) continue;
    const double s = evaluate_unclamped(field, x);
    if (std::abs(s) > delta) continue;
    set.points.push_back(x);
    set.sdf.push_back(std::clamp(s, -delta, delta));
    ++accepted;
  }
  for (int i = n_band; i < n; ++i) {
    const Vec3 x(rng.uniform(box.min.x(), box.max.x()),
                 rng.uniform(box.min.y(), box.max.y()),
                 rng.uniform(box.min.z(), box.max.z()));
    set.points.push_back(x);
    set.sdf.push_back(evaluate(field, x, delta));
  }
  return set;
}

void save_samples(const SdfSampleSet& set, const std::filesystem::path& bin_path) {
  std::ofstream out(bin_path, std::ios::binary);
  if (!out) throw Error("save_samples: cannot open " + bin_path.string());
  std::vector<float> rec(4);
  for (size_t i = 0; i < set.size(); ++i) {
    rec[0] = static_cast<float>(set.points[i].x());
    rec[1] = static_cast<float>(set.points[i].y());
    rec[2] = static_cast<float>(set.points[i].z());
    rec[3] = static_cast<float>(set.sdf[i]);
    out.write(reinterpret_cast<const char*>(rec.data()), 4 * sizeof(float));
  }
  if (!out) throw Error("save_samples: write failed");

  json side;
  side["design_id"] = set.design_id;
  side["n"] = set.size();
  side["delta"] = set.delta;
  side["band_fraction"] = set.band_fraction;
  side["tol_sign"] = set.tol_sign;
  side["tol_surf"] = set.tol_surf;
  side["seed"] = set.seed;
  std::ofstream meta(bin_path.string() + ".json");
  if (!meta) throw Error("save_samples: cannot open sidecar");
  meta << side.dump(2) << "\n";
}

SdfSampleSet load_samples(const std::filesystem::path& bin_path) {
  std::ifstream meta(bin_path.string() + ".json");
  if (!meta) throw Error("load_samples: missing sidecar for " + bin_path.string());
  json side = json::parse(meta);

  SdfSampleSet set;
  set.design_id = side.at("design_id").get<std::string>();
  set.delta = side.at("delta").get<double>();
  set.band_fraction = side.at("band_fraction").get<double>();
  set.tol_sign = side.at("tol_sign").get<double>();
  set.tol_surf = side.at("tol_surf").get<double>();
  set.seed = side.at("seed").get<uint64_t>();
  const size_t n = side.at("n").get<size_t>();

  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw Error("load_samples: cannot open " + bin_path.string());
  set.points.reserve(n);
  set.sdf.reserve(n);
  float rec[4];
  for (size_t i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(rec), 4 * sizeof(float));
    if (!in) throw Error("load_samples: truncated record file");
    set.points.emplace_back(rec[0], rec[1], rec[2]);
    set.sdf.push_back(rec[3]);
  }
  return set;
}

}  // namespace forge
