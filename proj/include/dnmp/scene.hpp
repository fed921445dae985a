#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "dnmp/autodiff/tensor.hpp"
#include "dnmp/mesh.hpp"
#include "dnmp/radiance.hpp"
#include "dnmp/raster.hpp"
#include "dnmp/shape_codec.hpp"

namespace dnmp {

struct PointCloud {
  ad::Tensor points;  // P x 3

  std::size_t size() const { return points.defined() ? points.rows() : 0; }
};

using VoxelKey = std::array<std::int64_t, 3>;

struct VoxelGrid {
  double voxel_size = 0.0;
  std::vector<VoxelKey> occupied;  // sorted, unique
};

// occupied = { floor(p / size) }.
VoxelGrid voxelize(const PointCloud& cloud, double size);

// Closed axis-aligned box.
struct Region {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  bool contains(const Vec3& p) const;
  static Region everything();
};

enum class ShapeMode { kLatent, kDirect };

struct PrimitiveRecord {
  VoxelKey voxel{};
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

// Primitives of one hierarchy level, stored as batched tensors. Primitive p
// owns rows [p N, (p + 1) N) of offsets and features.
struct HierarchyLevel {
  double voxel_size = 0.0;
  std::size_t max_hits = 4;
  std::vector<PrimitiveRecord> records;
  ad::Tensor latents;   // P x 8, unit rows
  ad::Tensor offsets;   // P N x 3, template units, direct shape mode only
  ad::Tensor features;  // P N x C

  std::size_t primitive_count() const { return records.size(); }
};

struct SceneBounds {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  // Maps p into roughly [-1, 1]^3 with one uniform scale.
  Vec3 normalize(const Vec3& p) const;
};

struct SceneConfig {
  std::vector<double> voxel_sizes{0.5, 1.0};  // finest first
  std::vector<std::size_t> max_hits{4, 2};
  // Template radius = radius_scale * voxel_size; the default circumscribes the voxel.
  double radius_scale = 0.8660254037844386;
  int feature_init_freq = 3;
  ShapeMode shape_mode = ShapeMode::kLatent;

  void validate(std::size_t feature_dim) const;
};

class SceneModel {
 public:
  IcosphereTemplate tmpl;
  DecoderParams decoder;  // frozen
  ad::Tensor sphere_code;  // 1 x 8 initial latent
  RadianceModel radiance;
  ad::Tensor background;  // 1 x 3
  SceneBounds bounds;
  SceneConfig config;
  std::vector<HierarchyLevel> levels;

  std::size_t feature_dim() const { return radiance.config.feature_dim; }
  std::size_t total_primitives() const;

  // P N x 3 world vertices, differentiable in the latents (or offsets in
  // direct mode).
  ad::Tensor world_vertices(std::size_t level) const;

  // World-space geometry and BVH of a level, rebuilt whenever the latents,
  // offsets, decoder or primitive set changed since the last access.
  std::shared_ptr<const LevelGeometry> geometry(std::size_t level) const;
  const Bvh& bvh(std::size_t level) const;

  // Call after changing the primitive set of a level.
  void mark_dirty(std::size_t level);

  // Deep copy; no tensor storage is shared with the original.
  SceneModel clone() const;

  // Parameters of each training stage.
  std::vector<ad::Tensor> shape_parameters(std::size_t level) const;
  std::vector<ad::Tensor> radiance_parameters() const;

 private:
  struct LevelCache {
    std::uint64_t key_latent = ~0ULL, key_offsets = ~0ULL, key_decoder = ~0ULL, key_edit = ~0ULL;
    std::uint64_t edit_generation = 0;
    std::shared_ptr<const LevelGeometry> geometry;
    std::shared_ptr<const Bvh> bvh;
  };
  std::uint64_t decoder_key() const;
  mutable std::vector<LevelCache> cache_;
  LevelCache& cache_for(std::size_t level) const;
};

// z minimising |G(z)|^2 on the unit sphere, starting from e1. Returns e1 as
// is when the decoder output there is already zero.
ad::Tensor find_sphere_code(const DecoderParams& dec, std::size_t iterations = 300);

// One primitive per occupied voxel on every level; latents start at the
// sphere code, features at the encoded normalised vertex positions.
SceneModel init_scene(const PointCloud& cloud, const SceneConfig& cfg, const DecoderParams& dec,
                      const IcosphereTemplate& tmpl, const RadianceConfig& radiance, std::uint64_t seed);

// Positional encoding of bounds-normalised world vertices of level rows.
ad::Tensor init_vertex_features(const ad::Tensor& world_vertices, const SceneBounds& bounds, int freq,
                                std::size_t feature_dim);

// Removes primitives whose centre lies in region, on every level.
std::size_t remove_primitives(SceneModel& scene, const Region& region);

// Deep-copies donor primitives whose centre lies in region, shifted by
// offset. Level i of the donor goes to level i of the scene.
std::size_t insert_primitives(SceneModel& scene, const SceneModel& donor, const Region& region, const Vec3& offset);

// f <- A f + b for each vertex whose world position lies in region.
struct FeatureTransform {
  std::vector<double> matrix;  // C x C row-major
  std::vector<double> bias;    // C

  static FeatureTransform identity(std::size_t dim);
  static FeatureTransform zero(std::size_t dim);
};
std::size_t edit_features(SceneModel& scene, const Region& region, const FeatureTransform& transform);

}  // namespace dnmp
