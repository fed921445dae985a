#pragma once

#include <filesystem>
#include <vector>

#include "json.hpp"

#include "dnmp/raster.hpp"

namespace dnmp::io {

// [{fx, fy, cx, cy, width, height, R: 9 row-major (world-from-camera), t: 3}]
std::vector<Camera> load_cameras(const std::filesystem::path& path);
void save_cameras(const std::vector<Camera>& cameras, const std::filesystem::path& path);

nlohmann::json camera_to_json(const Camera& cam);
Camera camera_from_json(const nlohmann::json& j);

}  // namespace dnmp::io
