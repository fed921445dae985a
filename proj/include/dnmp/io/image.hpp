#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace dnmp::io {

// RGB image with values nominally in [0, 1], row-major, interleaved.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;

  Image() = default;
  Image(int w, int h, double fill = 0.0);
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  double& at(int x, int y, int c) { return rgb[3 * (static_cast<std::size_t>(y) * width + x) + c]; }
  double at(int x, int y, int c) const { return rgb[3 * (static_cast<std::size_t>(y) * width + x) + c]; }
};

// 8-bit quantisation: byte = floor(v * 255 + 0.5) after clamping to [0, 1].
// Out-of-range values are clamped with a warning.
unsigned char to_byte(double v);

// Format is chosen by extension: .png or .ppm.
void write_image(const Image& img, const std::filesystem::path& path);
Image read_image(const std::filesystem::path& path);

}  // namespace dnmp::io
