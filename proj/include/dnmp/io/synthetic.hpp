#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dnmp/io/image.hpp"
#include "dnmp/raster.hpp"
#include "dnmp/scene.hpp"

namespace dnmp::io {

enum class Texture { kSine, kStripes, kChecker, kGround, kBrick, kMetal };

// Parallelogram origin + s u + t v with s, t in [0, 1].
struct QuadShape {
  Vec3 origin, u, v;
  Texture texture = Texture::kSine;
};

// Vertical (y-axis) cylinder without caps.
struct CylinderShape {
  double x = 0.0, z = 0.0, radius = 0.1, y0 = 0.0, y1 = 1.0;
  Texture texture = Texture::kMetal;
};

struct AnalyticHit {
  double t = 0.0;
  Vec3 point = Vec3::Zero();
  Texture texture = Texture::kSine;
};

struct SyntheticScene {
  std::string name;
  std::vector<QuadShape> quads;
  std::vector<CylinderShape> cylinders;
  std::vector<Camera> cameras;
  Vec3 background = Vec3::Zero();
  // Surface samples per square meter.
  double sample_density = 400.0;
  // Fraction of depth pixels dropped in the incomplete depth set (0: none).
  double dropout = 0.0;

  std::optional<AnalyticHit> trace(const Ray& ray) const;
  Vec3 shade(const AnalyticHit& hit) const;
};

// Axis-aligned box as six quads.
void add_box(SyntheticScene& scene, const Vec3& lo, const Vec3& hi, Texture texture);

// "quad", "room-corner" or "street-strip". World y points down.
SyntheticScene make_synthetic_scene(const std::string& name);

Vec3 texture_color(Texture t, const Vec3& p);

Image render_rgb(const SyntheticScene& scene, const Camera& camera);
// Camera-axis depth; 0 where the ray escapes.
std::vector<double> render_depth(const SyntheticScene& scene, const Camera& camera);
PointCloud sample_point_cloud(const SyntheticScene& scene, std::uint64_t seed);

// Writes cloud.ply, cameras.json, gt_rgb/NNN.png, gt_depth/NNN.bin and, when
// the scene has a dropout fraction, depth_dropout/NNN.bin.
void write_synthetic_scene(const SyntheticScene& scene, std::uint64_t seed, const std::filesystem::path& dir);

}  // namespace dnmp::io
