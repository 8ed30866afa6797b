#pragma once

#include <filesystem>

#include "forge/types.hpp"

namespace forge {

/// ASCII PLY writer (element vertex, properties x y z as float32).
void save_ply(const PointCloud& cloud, const std::filesystem::path& path);

/// Reads ASCII or binary_little_endian PLY vertex positions. Extra vertex
/// properties are skipped; other elements are ignored.
PointCloud load_ply(const std::filesystem::path& path);

/// CSV with header `x,y,z`.
void save_csv(const PointCloud& cloud, const std::filesystem::path& path);
PointCloud load_csv(const std::filesystem::path& path);

/// Dispatches on extension (.ply / .csv).
PointCloud load_cloud(const std::filesystem::path& path);

}  // namespace forge
