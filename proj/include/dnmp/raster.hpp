#pragma once

#include <array>
#include <limits>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "dnmp/autodiff/tensor.hpp"
#include "dnmp/mesh.hpp"

namespace dnmp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Rays closer than this to their origin are ignored.
inline constexpr double kNearT = 1e-4;
// Depth-map value of pixels with no surface.
inline constexpr double kNoDepth = 0.0;

struct Ray {
  Vec3 origin;
  Vec3 dir;  // unit length
};

// Pinhole camera, OpenCV axes (x right, y down, z forward). rotation and
// translation map camera coordinates to world coordinates.
struct Camera {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 1, height = 1;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  // Throws on fx, fy <= 0, non-positive size or a non-orthonormal rotation.
  void validate() const;
  // Ray through the centre of pixel (x, y).
  Ray pixel_ray(int x, int y) const;
  Vec3 forward() const { return rotation.col(2); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
};

// Camera looking at target from eye with world "up" hint.
Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx, double fy, int width, int height);

// Triangle soup of one hierarchy level in world coordinates.
struct LevelGeometry {
  std::vector<Vec3> vertices;
  std::vector<Vec3> normals;  // unit vertex normals
  std::vector<Face> faces;    // indices into vertices
  std::vector<std::uint32_t> face_primitive;
  std::vector<std::uint32_t> face_local;  // face index within its primitive

  std::size_t face_count() const { return faces.size(); }
};

struct RayHit {
  double t = 0.0;
  std::uint32_t primitive = 0;
  std::uint32_t face = 0;         // within the primitive
  std::uint32_t global_face = 0;  // index into LevelGeometry::faces
  std::array<double, 3> bary{};
};

// Sort order of hits: depth, then primitive id, then face id.
bool hit_before(const RayHit& a, const RayHit& b);

// Moller-Trumbore. Returns false for parallel rays, misses and t <= kNearT.
bool intersect_triangle(const Ray& ray, const Vec3& p0, const Vec3& p1, const Vec3& p2, double& t,
                        std::array<double, 3>& bary);

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());
  void extend(const Vec3& p);
  void extend(const Aabb& b);
  bool contains(const Aabb& b) const;
};

// Median-split bounding volume hierarchy over the faces of one level.
class Bvh {
 public:
  struct Node {
    Aabb box;
    std::uint32_t first = 0;  // leaf: first slot in face_order; inner: right child
    std::uint32_t count = 0;  // > 0 for leaves
  };

  Bvh() = default;
  explicit Bvh(std::shared_ptr<const LevelGeometry> geometry, std::size_t max_leaf_size = 2);

  bool empty() const { return nodes_.empty(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<std::uint32_t>& face_order() const { return face_order_; }
  const LevelGeometry* geometry() const { return geometry_.get(); }

  // The max_hits nearest hits with t > kNearT, front and back faces alike,
  // sorted by hit_before.
  std::vector<RayHit> intersect(const Ray& ray, std::size_t max_hits) const;

 private:
  std::uint32_t build(std::uint32_t begin, std::uint32_t end, std::vector<Vec3>& centroids,
                      std::size_t max_leaf_size);

  std::shared_ptr<const LevelGeometry> geometry_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> face_order_;
};

// Serial reference: tests every face.
std::vector<RayHit> intersect_brute_force(const LevelGeometry& geometry, const Ray& ray, std::size_t max_hits);

// J-nearest hits for a batch of rays; OpenMP over rays.
std::vector<std::vector<RayHit>> cast_rays(const Bvh& bvh, std::span<const Ray> rays, std::size_t max_hits);

// sum_k bary_k * attrs_k for a 3 x C attribute block; differentiable in both.
ad::Tensor interpolate_attributes(const ad::Tensor& face_attrs, const ad::Tensor& bary);

// Per-pixel nearest surface of one level.
struct ZBuffer {
  int width = 0, height = 0;
  std::vector<double> t;             // ray parameter, +inf when uncovered
  std::vector<std::int64_t> face;    // global face, -1 when uncovered
  std::vector<std::array<double, 3>> bary;

  bool covered(std::size_t pixel) const { return face[pixel] >= 0; }
};

// Face-order rasterisation: each face is tested against the rays of the
// pixels its projection may touch, using the same triangle test as ray
// casting, so the nearest surface matches Bvh::intersect exactly. The
// parallel version bins faces into screen tiles.
ZBuffer rasterize_nearest(const LevelGeometry& geometry, const Camera& camera);
ZBuffer rasterize_nearest_reference(const LevelGeometry& geometry, const Camera& camera);

// Camera-axis depth of a ray parameter: t * (dir . forward).
double ray_depth(const Camera& camera, const Ray& ray, double t);

struct DepthRender {
  // H x W camera-axis depth; kNoDepth where uncovered. Differentiable in the
  // world vertices with the pixel-to-face assignment frozen.
  ad::Tensor depth;
  std::vector<std::uint8_t> covered;
  std::vector<std::size_t> covered_pixels;
};

// world_vertices (V x 3) must hold the same values as geometry.vertices.
DepthRender rasterize_depth(const ad::Tensor& world_vertices, const LevelGeometry& geometry, const Camera& camera);

}  // namespace dnmp
