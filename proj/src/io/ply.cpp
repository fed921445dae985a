#include "dnmp/io/ply.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dnmp::io {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what);
}

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<std::string> properties;
  bool has_list = false;
};

bool parse_double(const std::string& tok, double& out) {
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

PointCloud load_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() {
    if (!std::getline(in, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next() || line != "ply") fail(path, lineno, "missing 'ply' magic");
  std::vector<Element> elements;
  bool format_seen = false;
  while (true) {
    if (!next()) fail(path, lineno, "unexpected end of header");
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "end_header") break;
    if (key == "comment" || key == "obj_info" || key.empty()) continue;
    if (key == "format") {
      std::string enc, ver;
      ss >> enc >> ver;
      if (enc != "ascii") fail(path, lineno, "unsupported encoding '" + enc + "' (only ascii PLY is supported)");
      format_seen = true;
    } else if (key == "element") {
      Element e;
      long long count = -1;
      ss >> e.name >> count;
      if (e.name.empty() || count < 0 || ss.fail()) fail(path, lineno, "malformed element line");
      e.count = static_cast<std::size_t>(count);
      elements.push_back(e);
    } else if (key == "property") {
      if (elements.empty()) fail(path, lineno, "property before any element");
      std::string type, name;
      ss >> type;
      if (type == "list") {
        std::string ct, it;
        ss >> ct >> it >> name;
        elements.back().has_list = true;
      } else {
        ss >> name;
      }
      if (name.empty()) fail(path, lineno, "malformed property line");
      elements.back().properties.push_back(name);
    } else {
      fail(path, lineno, "unknown header keyword '" + key + "'");
    }
  }
  if (!format_seen) fail(path, lineno, "missing format line");

  std::vector<double> xyz;
  bool have_vertex = false;
  for (const auto& e : elements) {
    int ix = -1, iy = -1, iz = -1;
    if (e.name == "vertex") {
      have_vertex = true;
      if (e.has_list) fail(path, lineno, "list properties on vertices are not supported");
      for (std::size_t i = 0; i < e.properties.size(); ++i) {
        if (e.properties[i] == "x") ix = static_cast<int>(i);
        if (e.properties[i] == "y") iy = static_cast<int>(i);
        if (e.properties[i] == "z") iz = static_cast<int>(i);
      }
      if (ix < 0 || iy < 0 || iz < 0) fail(path, lineno, "vertex element lacks x, y or z");
      xyz.reserve(3 * e.count);
    }
    for (std::size_t r = 0; r < e.count; ++r) {
      if (!next()) fail(path, lineno, "expected " + std::to_string(e.count) + " " + e.name + " rows, file ended after " + std::to_string(r));
      if (e.name != "vertex") continue;
      std::istringstream ss(line);
      std::vector<std::string> tok;
      for (std::string t; ss >> t;) tok.push_back(t);
      if (tok.size() != e.properties.size()) {
        fail(path, lineno, "expected " + std::to_string(e.properties.size()) + " values, found " + std::to_string(tok.size()));
      }
      double v[3];
      const int idx[3] = {ix, iy, iz};
      for (int a = 0; a < 3; ++a) {
        if (!parse_double(tok[idx[a]], v[a])) fail(path, lineno, "bad number '" + tok[idx[a]] + "'");
        xyz.push_back(v[a]);
      }
    }
  }
  if (!have_vertex) fail(path, lineno, "no vertex element");
  while (next()) {
    if (line.find_first_not_of(" \t") != std::string::npos) fail(path, lineno, "more data than declared");
  }
  PointCloud pc;
  const std::size_t n = xyz.size() / 3;
  pc.points = ad::Tensor({n, 3}, std::move(xyz));
  return pc;
}

void save_ply(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::size_t n = cloud.size();
  out << "ply\nformat ascii 1.0\nelement vertex " << n << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  char buf[64];
  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, cloud.points.data()[3 * i + a]);
      out.write(buf, ptr - buf);
      out.put(a == 2 ? '\n' : ' ');
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace dnmp::io
