#include "dnmp/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dnmp/autodiff/ops.hpp"

namespace dnmp {

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("camera image size must be positive");
  const Mat3 err = rotation.transpose() * rotation - Mat3::Identity();
  if (err.cwiseAbs().maxCoeff() > 1e-9) throw std::invalid_argument("camera rotation is not orthonormal");
  if (!translation.allFinite()) throw std::invalid_argument("camera translation is not finite");
}

Ray Camera::pixel_ray(int x, int y) const {
  const Vec3 local((x + 0.5 - cx) / fx, (y + 0.5 - cy) / fy, 1.0);
  return {translation, (rotation * local).normalized()};
}

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy, int width, int height) {
  const Vec3 z = (target - eye).normalized();
  Vec3 y = -up + up.dot(z) * z;
  if (y.norm() < 1e-12) throw std::invalid_argument("look_at: up vector is parallel to the view direction");
  y.normalize();
  const Vec3 x = y.cross(z);
  Camera cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.width = width;
  cam.height = height;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.rotation.col(0) = x;
  cam.rotation.col(1) = y;
  cam.rotation.col(2) = z;
  cam.translation = eye;
  return cam;
}

bool hit_before(const RayHit& a, const RayHit& b) {
  if (a.t != b.t) return a.t < b.t;
  if (a.primitive != b.primitive) return a.primitive < b.primitive;
  return a.face < b.face;
}

bool intersect_triangle(const Ray& ray, const Vec3& p0, const Vec3& p1, const Vec3& p2, double& t,
                        std::array<double, 3>& bary) {
  const Vec3 e1 = p1 - p0;
  const Vec3 e2 = p2 - p0;
  const Vec3 pvec = ray.dir.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < 1e-14) return false;
  const double inv = 1.0 / det;
  const Vec3 tvec = ray.origin - p0;
  const double u = tvec.dot(pvec) * inv;
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 qvec = tvec.cross(e1);
  const double v = ray.dir.dot(qvec) * inv;
  if (v < 0.0 || u + v > 1.0) return false;
  const double tt = e2.dot(qvec) * inv;
  if (!(tt > kNearT)) return false;
  t = tt;
  bary = {1.0 - u - v, u, v};
  return true;
}

void Aabb::extend(const Vec3& p) {
  lo = lo.cwiseMin(p);
  hi = hi.cwiseMax(p);
}

void Aabb::extend(const Aabb& b) {
  lo = lo.cwiseMin(b.lo);
  hi = hi.cwiseMax(b.hi);
}

bool Aabb::contains(const Aabb& b) const { return (lo.array() <= b.lo.array()).all() && (hi.array() >= b.hi.array()).all(); }

namespace {

// Slab test; returns the entry distance or +inf on a miss.
double box_entry(const Aabb& box, const Ray& ray, const Vec3& inv_dir) {
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(ray.dir[a]) < 1e-300) {
      if (ray.origin[a] < box.lo[a] || ray.origin[a] > box.hi[a]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double t0 = (box.lo[a] - ray.origin[a]) * inv_dir[a];
    double t1 = (box.hi[a] - ray.origin[a]) * inv_dir[a];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
  }
  if (tmax < tmin || tmax < kNearT) return std::numeric_limits<double>::infinity();
  return tmin;
}

// Keeps the k best hits under hit_before, sorted.
class HitList {
 public:
  explicit HitList(std::size_t k) : k_(k) { hits_.reserve(k + 1); }

  void offer(const RayHit& h) {
    if (k_ == 0) return;
    if (hits_.size() == k_ && !hit_before(h, hits_.back())) return;
    auto pos = std::upper_bound(hits_.begin(), hits_.end(), h, hit_before);
    hits_.insert(pos, h);
    if (hits_.size() > k_) hits_.pop_back();
  }
  bool full() const { return hits_.size() == k_; }
  double worst() const { return hits_.back().t; }
  std::vector<RayHit> take() { return std::move(hits_); }

 private:
  std::size_t k_;
  std::vector<RayHit> hits_;
};

void test_face(const LevelGeometry& g, std::uint32_t f, const Ray& ray, HitList& list) {
  const auto& face = g.faces[f];
  RayHit h;
  if (intersect_triangle(ray, g.vertices[face[0]], g.vertices[face[1]], g.vertices[face[2]], h.t, h.bary)) {
    h.primitive = g.face_primitive[f];
    h.face = g.face_local[f];
    h.global_face = f;
    list.offer(h);
  }
}

}  // namespace

Bvh::Bvh(std::shared_ptr<const LevelGeometry> geometry, std::size_t max_leaf_size) : geometry_(std::move(geometry)) {
  const auto& g = *geometry_;
  const auto n = static_cast<std::uint32_t>(g.faces.size());
  if (n == 0) return;
  face_order_.resize(n);
  std::iota(face_order_.begin(), face_order_.end(), 0u);
  std::vector<Vec3> centroids(n);
  for (std::uint32_t f = 0; f < n; ++f) {
    const auto& face = g.faces[f];
    centroids[f] = (g.vertices[face[0]] + g.vertices[face[1]] + g.vertices[face[2]]) / 3.0;
  }
  nodes_.reserve(2 * n);
  build(0, n, centroids, std::max<std::size_t>(1, max_leaf_size));
}

std::uint32_t Bvh::build(std::uint32_t begin, std::uint32_t end, std::vector<Vec3>& centroids,
                         std::size_t max_leaf_size) {
  const auto& g = *geometry_;
  const auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  Aabb box, cbox;
  for (std::uint32_t i = begin; i < end; ++i) {
    const auto& face = g.faces[face_order_[i]];
    for (auto v : face) box.extend(g.vertices[v]);
    cbox.extend(centroids[face_order_[i]]);
  }
  // Pad so that rounding in the slab test never rejects a face's own hits.
  const double pad = 1e-9 * (1.0 + std::max(box.lo.cwiseAbs().maxCoeff(), box.hi.cwiseAbs().maxCoeff()));
  box.lo.array() -= pad;
  box.hi.array() += pad;
  nodes_[index].box = box;

  const std::uint32_t count = end - begin;
  if (count <= max_leaf_size) {
    nodes_[index].first = begin;
    nodes_[index].count = count;
    return index;
  }
  int axis = 0;
  (cbox.hi - cbox.lo).maxCoeff(&axis);
  const std::uint32_t mid = begin + count / 2;
  std::nth_element(face_order_.begin() + begin, face_order_.begin() + mid, face_order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     if (centroids[a][axis] != centroids[b][axis]) return centroids[a][axis] < centroids[b][axis];
                     return a < b;
                   });
  build(begin, mid, centroids, max_leaf_size);
  const std::uint32_t right = build(mid, end, centroids, max_leaf_size);
  nodes_[index].first = right;
  nodes_[index].count = 0;
  return index;
}

std::vector<RayHit> Bvh::intersect(const Ray& ray, std::size_t max_hits) const {
  HitList list(max_hits);
  if (nodes_.empty() || max_hits == 0) return list.take();
  const Vec3 inv_dir = ray.dir.cwiseInverse();
  const auto& g = *geometry_;

  struct Entry {
    std::uint32_t node;
    double tmin;
  };
  std::vector<Entry> stack;
  stack.reserve(64);
  const double root_t = box_entry(nodes_[0].box, ray, inv_dir);
  if (std::isinf(root_t)) return list.take();
  stack.push_back({0, root_t});
  auto prunable = [&](double tmin) { return list.full() && tmin > list.worst() + 1e-9 * (1.0 + list.worst()); };

  while (!stack.empty()) {
    const Entry e = stack.back();
    stack.pop_back();
    if (prunable(e.tmin)) continue;
    const auto& node = nodes_[e.node];
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) test_face(g, face_order_[i], ray, list);
      continue;
    }
    const std::uint32_t left = e.node + 1, right = node.first;
    const double tl = box_entry(nodes_[left].box, ray, inv_dir);
    const double tr = box_entry(nodes_[right].box, ray, inv_dir);
    // Push the farther child first so the nearer one is visited next.
    if (tl <= tr) {
      if (!std::isinf(tr)) stack.push_back({right, tr});
      if (!std::isinf(tl)) stack.push_back({left, tl});
    } else {
      if (!std::isinf(tl)) stack.push_back({left, tl});
      if (!std::isinf(tr)) stack.push_back({right, tr});
    }
  }
  return list.take();
}

std::vector<RayHit> intersect_brute_force(const LevelGeometry& geometry, const Ray& ray, std::size_t max_hits) {
  HitList list(max_hits);
  for (std::uint32_t f = 0; f < geometry.faces.size(); ++f) test_face(geometry, f, ray, list);
  return list.take();
}

std::vector<std::vector<RayHit>> cast_rays(const Bvh& bvh, std::span<const Ray> rays, std::size_t max_hits) {
  std::vector<std::vector<RayHit>> out(rays.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rays.size()); ++i) {
    out[i] = bvh.intersect(rays[i], max_hits);
  }
  return out;
}

ad::Tensor interpolate_attributes(const ad::Tensor& face_attrs, const ad::Tensor& bary) {
  if (face_attrs.rank() != 2 || face_attrs.rows() != 3) throw std::invalid_argument("face attributes must be 3 x C");
  if (bary.numel() != 3) throw std::invalid_argument("barycentric coordinates must have 3 entries");
  const ad::Tensor b = bary.rank() == 2 && bary.rows() == 1 ? bary : ad::reshape(bary, {1, 3});
  return ad::matmul(b, face_attrs);
}

namespace {

struct PixelRays {
  std::vector<Ray> rays;
};

std::vector<Ray> all_pixel_rays(const Camera& camera) {
  std::vector<Ray> rays(camera.pixel_count());
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) rays[static_cast<std::size_t>(y) * camera.width + x] = camera.pixel_ray(x, y);
  }
  return rays;
}

struct PixelRect {
  int x0, y0, x1, y1;  // inclusive; empty when x0 > x1
};

// Conservative pixel rectangle that may contain the face's projection.
PixelRect face_rect(const LevelGeometry& g, std::size_t f, const Camera& cam) {
  const Mat3 rt = cam.rotation.transpose();
  double umin = std::numeric_limits<double>::infinity(), umax = -umin;
  double vmin = umin, vmax = -umin;
  int behind = 0;
  bool near_plane = false;
  for (auto vi : g.faces[f]) {
    const Vec3 pc = rt * (g.vertices[vi] - cam.translation);
    if (pc.z() <= 0.0) ++behind;
    if (pc.z() <= 1e-6) {
      near_plane = true;
      continue;
    }
    const double u = cam.fx * pc.x() / pc.z() + cam.cx;
    const double v = cam.fy * pc.y() / pc.z() + cam.cy;
    umin = std::min(umin, u);
    umax = std::max(umax, u);
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
  }
  if (behind == 3) return {0, 0, -1, -1};
  if (near_plane) return {0, 0, cam.width - 1, cam.height - 1};
  auto clampi = [](double v, int lo, int hi) {
    if (v < lo) return lo;
    if (v > hi) return hi;
    return static_cast<int>(v);
  };
  PixelRect r;
  r.x0 = clampi(std::floor(umin - 0.5) - 1, 0, cam.width);
  r.x1 = clampi(std::ceil(umax - 0.5) + 1, -1, cam.width - 1);
  r.y0 = clampi(std::floor(vmin - 0.5) - 1, 0, cam.height);
  r.y1 = clampi(std::ceil(vmax - 0.5) + 1, -1, cam.height - 1);
  return r;
}

bool key_before(const LevelGeometry& g, std::size_t a, std::int64_t b) {
  if (g.face_primitive[a] != g.face_primitive[b]) return g.face_primitive[a] < g.face_primitive[b];
  return g.face_local[a] < g.face_local[b];
}

void depth_test(const LevelGeometry& g, std::size_t f, const Ray& ray, std::size_t pixel, ZBuffer& zb) {
  const auto& face = g.faces[f];
  double t;
  std::array<double, 3> bary;
  if (!intersect_triangle(ray, g.vertices[face[0]], g.vertices[face[1]], g.vertices[face[2]], t, bary)) return;
  if (t < zb.t[pixel] || (t == zb.t[pixel] && key_before(g, f, zb.face[pixel]))) {
    zb.t[pixel] = t;
    zb.face[pixel] = static_cast<std::int64_t>(f);
    zb.bary[pixel] = bary;
  }
}

ZBuffer empty_zbuffer(const Camera& camera) {
  camera.validate();
  ZBuffer zb;
  zb.width = camera.width;
  zb.height = camera.height;
  zb.t.assign(camera.pixel_count(), std::numeric_limits<double>::infinity());
  zb.face.assign(camera.pixel_count(), -1);
  zb.bary.assign(camera.pixel_count(), {0.0, 0.0, 0.0});
  return zb;
}

constexpr int kTile = 16;

}  // namespace

ZBuffer rasterize_nearest_reference(const LevelGeometry& geometry, const Camera& camera) {
  ZBuffer zb = empty_zbuffer(camera);
  const auto rays = all_pixel_rays(camera);
  for (std::size_t f = 0; f < geometry.faces.size(); ++f) {
    const auto r = face_rect(geometry, f, camera);
    for (int y = r.y0; y <= r.y1; ++y) {
      for (int x = r.x0; x <= r.x1; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * camera.width + x;
        depth_test(geometry, f, rays[p], p, zb);
      }
    }
  }
  return zb;
}

ZBuffer rasterize_nearest(const LevelGeometry& geometry, const Camera& camera) {
  ZBuffer zb = empty_zbuffer(camera);
  const auto rays = all_pixel_rays(camera);
  const int tiles_x = (camera.width + kTile - 1) / kTile;
  const int tiles_y = (camera.height + kTile - 1) / kTile;
  std::vector<PixelRect> rects(geometry.faces.size());
  std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(tiles_x * tiles_y));
  for (std::size_t f = 0; f < geometry.faces.size(); ++f) {
    const auto r = face_rect(geometry, f, camera);
    rects[f] = r;
    if (r.x0 > r.x1 || r.y0 > r.y1) continue;
    for (int ty = r.y0 / kTile; ty <= r.y1 / kTile; ++ty) {
      for (int tx = r.x0 / kTile; tx <= r.x1 / kTile; ++tx) bins[ty * tiles_x + tx].push_back(static_cast<std::uint32_t>(f));
    }
  }
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t tile = 0; tile < static_cast<std::ptrdiff_t>(bins.size()); ++tile) {
    const int tx = static_cast<int>(tile % tiles_x), ty = static_cast<int>(tile / tiles_x);
    const int bx0 = tx * kTile, by0 = ty * kTile;
    const int bx1 = std::min(bx0 + kTile, camera.width) - 1, by1 = std::min(by0 + kTile, camera.height) - 1;
    for (auto f : bins[tile]) {
      const auto& r = rects[f];
      for (int y = std::max(r.y0, by0); y <= std::min(r.y1, by1); ++y) {
        for (int x = std::max(r.x0, bx0); x <= std::min(r.x1, bx1); ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * camera.width + x;
          depth_test(geometry, f, rays[p], p, zb);
        }
      }
    }
  }
  return zb;
}

double ray_depth(const Camera& camera, const Ray& ray, double t) { return t * ray.dir.dot(camera.forward()); }

DepthRender rasterize_depth(const ad::Tensor& world_vertices, const LevelGeometry& geometry, const Camera& camera) {
  if (world_vertices.rank() != 2 || world_vertices.cols() != 3 || world_vertices.rows() != geometry.vertices.size()) {
    throw std::invalid_argument("rasterize_depth: world vertex tensor does not match the level geometry");
  }
  const auto zb = rasterize_nearest(geometry, camera);
  DepthRender out;
  const std::size_t npix = camera.pixel_count();
  out.covered.assign(npix, 0);
  std::vector<std::size_t> i0, i1, i2;
  std::vector<double> origins, dirs, axial;
  for (std::size_t p = 0; p < npix; ++p) {
    if (!zb.covered(p)) continue;
    out.covered[p] = 1;
    out.covered_pixels.push_back(p);
    const auto& face = geometry.faces[static_cast<std::size_t>(zb.face[p])];
    i0.push_back(face[0]);
    i1.push_back(face[1]);
    i2.push_back(face[2]);
    const Ray ray = camera.pixel_ray(static_cast<int>(p % camera.width), static_cast<int>(p / camera.width));
    origins.insert(origins.end(), ray.origin.data(), ray.origin.data() + 3);
    dirs.insert(dirs.end(), ray.dir.data(), ray.dir.data() + 3);
    axial.push_back(ray.dir.dot(camera.forward()));
  }
  const ad::Shape hw{static_cast<std::size_t>(camera.height), static_cast<std::size_t>(camera.width)};
  const std::size_t k = out.covered_pixels.size();
  if (k == 0) {
    out.depth = ad::Tensor::full(hw, kNoDepth);
    return out;
  }
  using namespace ad;
  const Tensor p0 = gather_rows(world_vertices, i0);
  const Tensor p1 = gather_rows(world_vertices, i1);
  const Tensor p2 = gather_rows(world_vertices, i2);
  const Tensor normal = cross_rows(sub(p1, p0), sub(p2, p0));
  const Tensor o({k, 3}, std::move(origins));
  const Tensor d({k, 3}, std::move(dirs));
  const Tensor t = div(dot_rows(normal, sub(p0, o)), dot_rows(normal, d));
  const Tensor depth = mul(t, Tensor::column(std::move(axial)));
  out.depth = scatter_add(depth, out.covered_pixels, hw);
  return out;
}

}  // namespace dnmp
