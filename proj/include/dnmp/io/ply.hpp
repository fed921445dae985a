#pragma once

#include <filesystem>

#include "dnmp/scene.hpp"

namespace dnmp::io {

// ASCII PLY with float x, y, z vertex properties; other properties and
// elements are skipped. Errors name the offending line.
PointCloud load_ply(const std::filesystem::path& path);
// Writes coordinates with round-trip precision.
void save_ply(const PointCloud& cloud, const std::filesystem::path& path);

}  // namespace dnmp::io
