#include "dnmp/io/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "dnmp/io/cameras.hpp"
#include "dnmp/io/depth.hpp"
#include "dnmp/io/image.hpp"
#include "dnmp/io/ply.hpp"

namespace dnmp::io {

std::string view_name(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", index);
  return buf;
}

Dataset load_dataset(const std::filesystem::path& dir, const std::string& depth_set) {
  Dataset d;
  d.cloud = load_ply(dir / "cloud.ply");
  d.cameras = load_cameras(dir / "cameras.json");
  for (std::size_t i = 0; i < d.cameras.size(); ++i) {
    const auto& cam = d.cameras[i];
    const auto img = read_image(dir / "gt_rgb" / (view_name(i) + ".png"));
    if (img.width != cam.width || img.height != cam.height) {
      throw std::runtime_error("image " + view_name(i) + " does not match its camera");
    }
    d.images.push_back({cam, img.rgb});
    const auto depth = read_depth(dir / depth_set / (view_name(i) + ".bin"));
    if (depth.width != static_cast<std::uint32_t>(cam.width) || depth.height != static_cast<std::uint32_t>(cam.height)) {
      throw std::runtime_error("depth map " + view_name(i) + " does not match its camera");
    }
    DepthView v;
    v.camera = cam;
    v.depth.assign(depth.values.begin(), depth.values.end());
    v.valid.resize(v.depth.size());
    for (std::size_t p = 0; p < v.depth.size(); ++p) v.valid[p] = std::isfinite(v.depth[p]) && v.depth[p] > 0.0;
    d.depths.push_back(std::move(v));
  }
  return d;
}

}  // namespace dnmp::io
