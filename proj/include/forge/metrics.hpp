#pragma once

#include "forge/decoder.hpp"
#include "forge/meshing.hpp"
#include "forge/types.hpp"

namespace forge {

/// Directed mean nearest-neighbour distance from each reference point to
/// the predicted sample set. Asymmetric by construction.
double surface_distance_points(const std::vector<Vec3>& ref,
                               const std::vector<Vec3>& pred);

/// Directed distance from reference points to a mesh represented by
/// area-weighted surface samples.
double surface_distance(const PointCloud& ref, const TriangleMesh& pred,
                        int n_pred_samples = 100000, uint64_t seed = 7);

/// Verification path: exact point-to-triangle distances instead of
/// sampled ones.
double surface_distance_exact(const PointCloud& ref, const TriangleMesh& pred);

enum class NrmseNorm { kRange, kStd };

struct NrmseReport {
  Eigen::VectorXd per_dim_pct;    // NaN for undefined dims
  double mean_pct = 0;
  std::vector<int> undefined_dims;
};

/// Per-dimension RMSE normalized by the truth spread (range by default),
/// in percent. Rows are aligned by design id.
NrmseReport nrmse_per_dim(const LatentTable& truth, const LatentTable& pred,
                          NrmseNorm norm = NrmseNorm::kRange);

/// NRMSE between raw code matrices with aligned rows.
NrmseReport nrmse_codes(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred,
                        NrmseNorm norm = NrmseNorm::kRange);

}  // namespace forge
