#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dnmp::io {

// Little-endian u32 width, u32 height, then width * height float32 values,
// row-major. Zero marks a pixel without depth.
struct DepthMap {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<float> values;
};

void write_depth(const DepthMap& map, const std::filesystem::path& path);
DepthMap read_depth(const std::filesystem::path& path);

}  // namespace dnmp::io
