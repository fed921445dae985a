#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dnmp/radiance.hpp"
#include "dnmp/raster.hpp"
#include "dnmp/scene.hpp"

namespace dnmp {

// Hit lists of a set of rays: hits[level][ray].
using LevelHitLists = std::vector<std::vector<std::vector<RayHit>>>;

// Casts rays through every level with that level's intersection count.
LevelHitLists trace_rays(const SceneModel& scene, std::span<const Ray> rays);

struct ShadeResult {
  ad::Tensor rgb;  // R x 3, blended with the background
  std::vector<Composite> levels;
};

// Differentiable colours of R rays in the vertex features, radiance
// parameters and background, with the hits held fixed. hits[level][ray]
// points at that ray's hit list.
ShadeResult shade_rays(const SceneModel& scene, std::span<const Ray> rays,
                       const std::vector<std::vector<const std::vector<RayHit>*>>& hits);

struct RenderOptions {
  bool parallel = true;
  std::size_t chunk = 1024;  // rays per shading batch
};

struct RenderOutput {
  int width = 0, height = 0;
  std::vector<double> rgb;    // H W 3, row-major
  std::vector<double> depth;  // camera-axis depth of the nearest hit, kNoDepth if none
  std::vector<std::vector<double>> acc;  // per level, H W
};

// Pixel batches have a fixed size, so the parallel and serial paths compute
// identical values.
RenderOutput render_image(const SceneModel& scene, const Camera& camera, const RenderOptions& options = {});

}  // namespace dnmp
