#include "dnmp/io/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "dnmp/log.hpp"

namespace dnmp::io {

Image::Image(int w, int h, double fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw std::invalid_argument("image size must be positive");
  rgb.assign(3 * pixel_count(), fill);
}

unsigned char to_byte(double v) {
  if (!(v >= 0.0 && v <= 1.0)) v = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
  return static_cast<unsigned char>(std::floor(v * 255.0 + 0.5));
}

namespace {

std::vector<unsigned char> quantize(const Image& img) {
  if (img.rgb.size() != 3 * img.pixel_count() || img.width <= 0 || img.height <= 0) {
    throw std::invalid_argument("image buffer does not match its size");
  }
  std::size_t clamped = 0;
  std::vector<unsigned char> bytes(img.rgb.size());
  for (std::size_t i = 0; i < img.rgb.size(); ++i) {
    if (!(img.rgb[i] >= 0.0 && img.rgb[i] <= 1.0)) ++clamped;
    bytes[i] = to_byte(img.rgb[i]);
  }
  if (clamped > 0) log::warn(std::to_string(clamped) + " image values outside [0, 1] were clamped");
  return bytes;
}

Image from_bytes(int w, int h, const unsigned char* bytes) {
  Image img(w, h);
  for (std::size_t i = 0; i < img.rgb.size(); ++i) img.rgb[i] = bytes[i] / 255.0;
  return img;
}

bool has_extension(const std::filesystem::path& p, const char* ext) {
  std::string e = p.extension().string();
  for (auto& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e == ext;
}

void write_png(const Image& img, const std::filesystem::path& path) {
  const auto bytes = quantize(img);
  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.width);
  pi.height = static_cast<png_uint_32>(img.height);
  pi.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&pi, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + pi.message);
  }
}

Image read_png(const std::filesystem::path& path) {
  png_image pi{};
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&pi, path.c_str())) {
    throw std::runtime_error("cannot read PNG " + path.string() + ": " + pi.message);
  }
  pi.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, bytes.data(), 0, nullptr)) {
    throw std::runtime_error("cannot decode PNG " + path.string() + ": " + pi.message);
  }
  return from_bytes(static_cast<int>(pi.width), static_cast<int>(pi.height), bytes.data());
}

void write_ppm(const Image& img, const std::filesystem::path& path) {
  const auto bytes = quantize(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) {
    throw std::runtime_error(path.string() + ": only 8-bit binary PPM (P6) is supported");
  }
  in.get();
  std::vector<unsigned char> bytes(3 * static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw std::runtime_error(path.string() + ": truncated PPM");
  return from_bytes(w, h, bytes.data());
}

}  // namespace

void write_image(const Image& img, const std::filesystem::path& path) {
  if (has_extension(path, ".png")) return write_png(img, path);
  if (has_extension(path, ".ppm")) return write_ppm(img, path);
  throw std::invalid_argument("unsupported image extension: " + path.string());
}

Image read_image(const std::filesystem::path& path) {
  if (has_extension(path, ".png")) return read_png(path);
  if (has_extension(path, ".ppm")) return read_ppm(path);
  throw std::invalid_argument("unsupported image extension: " + path.string());
}

}  // namespace dnmp::io
