#include "dnmp/io/depth.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dnmp::io {

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

}  // namespace

void write_depth(const DepthMap& map, const std::filesystem::path& path) {
  if (map.values.size() != static_cast<std::size_t>(map.width) * map.height) {
    throw std::invalid_argument("depth map buffer does not match its size");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  put_u32(out, map.width);
  put_u32(out, map.height);
  for (float v : map.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

DepthMap read_depth(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  unsigned char hdr[8];
  in.read(reinterpret_cast<char*>(hdr), 8);
  if (in.gcount() != 8) throw std::runtime_error(path.string() + ": truncated depth header");
  DepthMap m;
  m.width = get_u32(hdr);
  m.height = get_u32(hdr + 4);
  const std::size_t n = static_cast<std::size_t>(m.width) * m.height;
  std::vector<unsigned char> raw(4 * n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw std::runtime_error(path.string() + ": truncated depth data");
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error(path.string() + ": trailing bytes after depth data");
  m.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) m.values[i] = std::bit_cast<float>(get_u32(raw.data() + 4 * i));
  return m;
}

}  // namespace dnmp::io
