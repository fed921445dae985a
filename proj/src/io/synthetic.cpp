#include "dnmp/io/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>

#include "dnmp/io/cameras.hpp"
#include "dnmp/io/depth.hpp"
#include "dnmp/io/ply.hpp"
#include "dnmp/random.hpp"

namespace dnmp::io {

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

std::optional<AnalyticHit> hit_quad(const QuadShape& q, const Ray& ray) {
  const Vec3 n = q.u.cross(q.v);
  const double denom = n.dot(ray.dir);
  if (std::abs(denom) < 1e-14) return std::nullopt;
  const double t = n.dot(q.origin - ray.origin) / denom;
  if (!(t > kNearT)) return std::nullopt;
  const Vec3 p = ray.origin + t * ray.dir;
  const Vec3 w = p - q.origin;
  const double s = w.dot(q.u) / q.u.squaredNorm();
  const double r = w.dot(q.v) / q.v.squaredNorm();
  if (s < 0.0 || s > 1.0 || r < 0.0 || r > 1.0) return std::nullopt;
  return AnalyticHit{t, p, q.texture};
}

std::optional<AnalyticHit> hit_cylinder(const CylinderShape& c, const Ray& ray) {
  const double ox = ray.origin.x() - c.x, oz = ray.origin.z() - c.z;
  const double a = ray.dir.x() * ray.dir.x() + ray.dir.z() * ray.dir.z();
  if (a < 1e-14) return std::nullopt;
  const double b = 2.0 * (ox * ray.dir.x() + oz * ray.dir.z());
  const double cc = ox * ox + oz * oz - c.radius * c.radius;
  const double disc = b * b - 4.0 * a * cc;
  if (disc < 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  for (double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
    if (!(t > kNearT)) continue;
    const Vec3 p = ray.origin + t * ray.dir;
    if (p.y() < c.y0 || p.y() > c.y1) continue;
    return AnalyticHit{t, p, c.texture};
  }
  return std::nullopt;
}

Vec3 clamp01(const Vec3& c) { return c.cwiseMax(0.0).cwiseMin(1.0); }

}  // namespace

Vec3 texture_color(Texture t, const Vec3& p) {
  const double x = p.x(), y = p.y(), z = p.z();
  switch (t) {
    case Texture::kSine:
      return clamp01({0.5 + 0.3 * std::sin(kTau * x / 1.7 + 0.3),
                      0.5 + 0.3 * std::sin(kTau * y / 1.3 + 1.1) * std::cos(kTau * x / 2.3),
                      0.5 + 0.3 * std::cos(kTau * (x + y) / 2.9)});
    case Texture::kStripes:
      return clamp01({0.55 + 0.25 * std::sin(kTau * z / 1.5), 0.45 + 0.2 * std::cos(kTau * y / 1.1),
                      0.4 + 0.2 * std::sin(kTau * (z - y) / 2.2)});
    case Texture::kChecker: {
      const double s = std::tanh(3.0 * std::sin(std::numbers::pi * x / 0.75) * std::sin(std::numbers::pi * z / 0.75));
      return clamp01({0.5 + 0.3 * s, 0.5 + 0.25 * s, 0.45 - 0.2 * s});
    }
    case Texture::kGround:
      return clamp01({0.35 + 0.08 * std::sin(kTau * z / 3.0), 0.35 + 0.08 * std::sin(kTau * z / 3.0),
                      0.38 + 0.06 * std::cos(kTau * x / 2.5)});
    case Texture::kBrick:
      return clamp01({0.62 + 0.12 * std::sin(kTau * z / 1.2), 0.32 + 0.08 * std::sin(kTau * y / 0.9),
                      0.26 + 0.05 * std::cos(kTau * z / 1.7)});
    case Texture::kMetal:
      return clamp01({0.7 + 0.1 * std::sin(kTau * y / 0.8), 0.7 + 0.1 * std::sin(kTau * y / 0.8), 0.76});
  }
  return Vec3::Zero();
}

std::optional<AnalyticHit> SyntheticScene::trace(const Ray& ray) const {
  std::optional<AnalyticHit> best;
  auto take = [&](const std::optional<AnalyticHit>& h) {
    if (h && (!best || h->t < best->t)) best = h;
  };
  for (const auto& q : quads) take(hit_quad(q, ray));
  for (const auto& c : cylinders) take(hit_cylinder(c, ray));
  return best;
}

Vec3 SyntheticScene::shade(const AnalyticHit& hit) const { return texture_color(hit.texture, hit.point); }

void add_box(SyntheticScene& scene, const Vec3& lo, const Vec3& hi, Texture texture) {
  const Vec3 d = hi - lo;
  const Vec3 ex(d.x(), 0, 0), ey(0, d.y(), 0), ez(0, 0, d.z());
  scene.quads.push_back({lo, ex, ey, texture});
  scene.quads.push_back({lo + ez, ex, ey, texture});
  scene.quads.push_back({lo, ey, ez, texture});
  scene.quads.push_back({lo + ex, ey, ez, texture});
  scene.quads.push_back({lo, ex, ez, texture});
  scene.quads.push_back({lo + ey, ex, ez, texture});
}

SyntheticScene make_synthetic_scene(const std::string& name) {
  SyntheticScene s;
  s.name = name;
  const Vec3 up(0, -1, 0);
  const double deg = std::numbers::pi / 180.0;
  if (name == "quad") {
    s.quads.push_back({Vec3(-2, -2, 2.2), Vec3(4, 0, 0), Vec3(0, 4, 0), Texture::kSine});
    const Vec3 target(0, 0, 2.2);
    for (int i = 0; i < 8; ++i) {
      const double th = (-25.0 + 50.0 * i / 7.0) * deg;
      const Vec3 eye = target + 2.0 * Vec3(std::sin(th), 0.0, -std::cos(th));
      s.cameras.push_back(look_at(eye, target, up, 60, 60, 64, 48));
    }
    s.dropout = 0.5;
  } else if (name == "room-corner") {
    s.quads.push_back({Vec3(-2, 1, 0), Vec3(4, 0, 0), Vec3(0, 0, 4), Texture::kChecker});
    s.quads.push_back({Vec3(-2, -1.5, 4), Vec3(4, 0, 0), Vec3(0, 2.5, 0), Texture::kSine});
    s.quads.push_back({Vec3(-2, -1.5, 0), Vec3(0, 0, 4), Vec3(0, 2.5, 0), Texture::kStripes});
    s.background = Vec3(0.2, 0.2, 0.25);
    const Vec3 target(-0.5, 0.2, 2.5);
    for (int i = 0; i < 8; ++i) {
      const double th = (-15.0 + 40.0 * i / 7.0) * deg;
      const Vec3 eye = target + 2.8 * Vec3(std::sin(th), -0.1, -std::cos(th));
      s.cameras.push_back(look_at(eye, target, up, 55, 55, 64, 48));
    }
  } else if (name == "street-strip") {
    s.quads.push_back({Vec3(-2.4, 1.4, 0), Vec3(4.8, 0, 0), Vec3(0, 0, 10), Texture::kGround});
    s.quads.push_back({Vec3(-2.4, -1.6, 0), Vec3(0, 3, 0), Vec3(0, 0, 10), Texture::kBrick});
    s.quads.push_back({Vec3(2.4, -1.6, 0), Vec3(0, 3, 0), Vec3(0, 0, 10), Texture::kStripes});
    add_box(s, Vec3(0.6, 0.4, 4.4), Vec3(1.6, 1.4, 5.4), Texture::kChecker);
    s.cylinders.push_back({-1.2, 6.6, 0.15, -0.6, 1.4, Texture::kMetal});
    s.background = Vec3(0.55, 0.7, 0.9);
    for (int i = 0; i < 10; ++i) {
      const double z = 0.3 * i;
      const Vec3 eye(0.0, 0.0, z);
      const Vec3 target(0.3 * std::sin(1.3 * i), 0.15, z + 5.0);
      s.cameras.push_back(look_at(eye, target, up, 50, 50, 64, 48));
    }
    s.dropout = 0.3;
  } else {
    throw std::invalid_argument("unknown synthetic scene '" + name + "' (expected quad, room-corner or street-strip)");
  }
  return s;
}

Image render_rgb(const SyntheticScene& scene, const Camera& camera) {
  camera.validate();
  Image img(camera.width, camera.height);
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const auto hit = scene.trace(camera.pixel_ray(x, y));
      const Vec3 c = hit ? scene.shade(*hit) : scene.background;
      for (int k = 0; k < 3; ++k) img.at(x, y, k) = c[k];
    }
  }
  return img;
}

std::vector<double> render_depth(const SyntheticScene& scene, const Camera& camera) {
  camera.validate();
  std::vector<double> d(camera.pixel_count(), kNoDepth);
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const Ray ray = camera.pixel_ray(x, y);
      if (const auto hit = scene.trace(ray)) d[static_cast<std::size_t>(y) * camera.width + x] = ray_depth(camera, ray, hit->t);
    }
  }
  return d;
}

PointCloud sample_point_cloud(const SyntheticScene& scene, std::uint64_t seed) {
  std::vector<double> pts;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::uint64_t shape = 0;
  for (const auto& q : scene.quads) {
    std::mt19937_64 rng(derive_seed(seed, {shape++}));
    const auto n = static_cast<std::size_t>(std::llround(q.u.cross(q.v).norm() * scene.sample_density));
    for (std::size_t i = 0; i < n; ++i) {
      const double a = uni(rng), b = uni(rng);
      const Vec3 p = q.origin + a * q.u + b * q.v;
      pts.insert(pts.end(), {p.x(), p.y(), p.z()});
    }
  }
  for (const auto& c : scene.cylinders) {
    std::mt19937_64 rng(derive_seed(seed, {shape++}));
    const double area = kTau * c.radius * (c.y1 - c.y0);
    const auto n = static_cast<std::size_t>(std::llround(area * scene.sample_density));
    for (std::size_t i = 0; i < n; ++i) {
      const double phi = kTau * uni(rng), y = c.y0 + (c.y1 - c.y0) * uni(rng);
      pts.insert(pts.end(), {c.x + c.radius * std::cos(phi), y, c.z + c.radius * std::sin(phi)});
    }
  }
  PointCloud pc;
  const std::size_t n = pts.size() / 3;
  pc.points = ad::Tensor({n, 3}, std::move(pts));
  return pc;
}

void write_synthetic_scene(const SyntheticScene& scene, std::uint64_t seed, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "gt_rgb");
  fs::create_directories(dir / "gt_depth");
  if (scene.dropout > 0.0) fs::create_directories(dir / "depth_dropout");
  save_ply(sample_point_cloud(scene, seed), dir / "cloud.ply");
  save_cameras(scene.cameras, dir / "cameras.json");
  for (std::size_t i = 0; i < scene.cameras.size(); ++i) {
    const auto& cam = scene.cameras[i];
    char name[16];
    std::snprintf(name, sizeof name, "%03zu", i);
    write_image(render_rgb(scene, cam), dir / "gt_rgb" / (std::string(name) + ".png"));
    const auto depth = render_depth(scene, cam);
    DepthMap m{static_cast<std::uint32_t>(cam.width), static_cast<std::uint32_t>(cam.height), {}};
    m.values.assign(depth.begin(), depth.end());
    write_depth(m, dir / "gt_depth" / (std::string(name) + ".bin"));
    if (scene.dropout > 0.0) {
      std::mt19937_64 rng(derive_seed(seed, {0xd70, i}));
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      for (auto& v : m.values) {
        if (uni(rng) < scene.dropout) v = 0.0f;
      }
      write_depth(m, dir / "depth_dropout" / (std::string(name) + ".bin"));
    }
  }
}

}  // namespace dnmp::io
