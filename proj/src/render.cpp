#include "dnmp/render.hpp"

#include <algorithm>
#include <stdexcept>

#include "dnmp/autodiff/ops.hpp"
#include "dnmp/autodiff/tape.hpp"

namespace dnmp {

LevelHitLists trace_rays(const SceneModel& scene, std::span<const Ray> rays) {
  LevelHitLists out;
  for (std::size_t l = 0; l < scene.levels.size(); ++l) {
    out.push_back(cast_rays(scene.bvh(l), rays, scene.levels[l].max_hits));
  }
  return out;
}

namespace {

Composite shade_level(const SceneModel& scene, std::size_t level, std::span<const Ray> rays,
                      const std::vector<const std::vector<RayHit>*>& hits) {
  const std::size_t r = rays.size();
  const std::size_t j_count = scene.levels[level].max_hits;
  std::size_t h = 0;
  for (const auto* list : hits) h += list->size();
  if (h == 0) return {ad::Tensor::zeros({r, 3}), ad::Tensor::zeros({r, 1})};

  const auto& geom = *scene.geometry(level);
  std::vector<std::size_t> v[3];
  std::vector<double> b[3];
  for (int k = 0; k < 3; ++k) {
    v[k].reserve(h);
    b[k].reserve(h);
  }
  std::vector<double> view;
  view.reserve(6 * h);
  std::vector<std::size_t> slot, slot_rgb;
  slot.reserve(h);
  slot_rgb.reserve(3 * h);
  for (std::size_t i = 0; i < r; ++i) {
    const auto& list = *hits[i];
    if (list.size() > j_count) throw std::invalid_argument("shade_rays: more hits than the level's intersection count");
    for (std::size_t j = 0; j < list.size(); ++j) {
      const auto& hit = list[j];
      const auto& face = geom.faces[hit.global_face];
      Vec3 n = Vec3::Zero();
      for (int k = 0; k < 3; ++k) {
        v[k].push_back(face[k]);
        b[k].push_back(hit.bary[k]);
        n += hit.bary[k] * geom.normals[face[k]];
      }
      if (n.norm() < 1e-12) {
        n = (geom.vertices[face[1]] - geom.vertices[face[0]]).cross(geom.vertices[face[2]] - geom.vertices[face[0]]);
      }
      n = n.norm() > 1e-300 ? n.normalized() : Vec3::UnitZ();
      view.insert(view.end(), {n.x(), n.y(), n.z(), rays[i].dir.x(), rays[i].dir.y(), rays[i].dir.z()});
      const std::size_t s = i * j_count + j;
      slot.push_back(s);
      for (int c = 0; c < 3; ++c) slot_rgb.push_back(3 * s + c);
    }
  }
  const ad::Tensor& features = scene.levels[level].features;
  ad::Tensor f;
  for (int k = 0; k < 3; ++k) {
    const ad::Tensor term = ad::mul(ad::gather_rows(features, v[k]), ad::Tensor::column(std::move(b[k])));
    f = f.defined() ? ad::add(f, term) : term;
  }
  const auto out = eval_radiance(f, ad::Tensor({h, 6}, std::move(view)), scene.radiance);
  const ad::Tensor alpha = ad::scatter_add(out.alpha, slot, {r, j_count});
  const ad::Tensor rgb = ad::scatter_add(out.rgb, slot_rgb, {r, 3 * j_count});
  return composite(alpha, rgb);
}

}  // namespace

ShadeResult shade_rays(const SceneModel& scene, std::span<const Ray> rays,
                       const std::vector<std::vector<const std::vector<RayHit>*>>& hits) {
  if (hits.size() != scene.levels.size()) throw std::invalid_argument("shade_rays: need hit lists for every level");
  ShadeResult res;
  for (std::size_t l = 0; l < scene.levels.size(); ++l) {
    if (hits[l].size() != rays.size()) throw std::invalid_argument("shade_rays: hit lists do not match the rays");
    res.levels.push_back(shade_level(scene, l, rays, hits[l]));
  }
  res.rgb = blend_hierarchies(res.levels, scene.background);
  return res;
}

RenderOutput render_image(const SceneModel& scene, const Camera& camera, const RenderOptions& options) {
  camera.validate();
  if (options.chunk == 0) throw std::invalid_argument("render chunk size must be positive");
  const std::size_t npix = camera.pixel_count();
  const std::size_t nlev = scene.levels.size();
  RenderOutput out;
  out.width = camera.width;
  out.height = camera.height;
  out.rgb.assign(3 * npix, 0.0);
  out.depth.assign(npix, kNoDepth);
  out.acc.assign(nlev, std::vector<double>(npix, 0.0));
  // Build every cached structure before the parallel region.
  for (std::size_t l = 0; l < nlev; ++l) scene.bvh(l);

  const std::size_t chunks = (npix + options.chunk - 1) / options.chunk;
  auto run_chunk = [&](std::size_t c) {
    ad::NoGradScope no_grad;
    const std::size_t begin = c * options.chunk, end = std::min(npix, begin + options.chunk);
    std::vector<Ray> rays;
    rays.reserve(end - begin);
    for (std::size_t p = begin; p < end; ++p) {
      rays.push_back(camera.pixel_ray(static_cast<int>(p % camera.width), static_cast<int>(p / camera.width)));
    }
    std::vector<std::vector<std::vector<RayHit>>> lists(nlev);
    std::vector<std::vector<const std::vector<RayHit>*>> ptrs(nlev);
    for (std::size_t l = 0; l < nlev; ++l) {
      const Bvh& bvh = scene.bvh(l);
      lists[l].reserve(rays.size());
      for (const auto& ray : rays) lists[l].push_back(bvh.intersect(ray, scene.levels[l].max_hits));
      for (const auto& h : lists[l]) ptrs[l].push_back(&h);
    }
    const ShadeResult res = shade_rays(scene, rays, ptrs);
    const auto& rgb = res.rgb.data();
    for (std::size_t i = 0; i < rays.size(); ++i) {
      const std::size_t p = begin + i;
      for (int k = 0; k < 3; ++k) out.rgb[3 * p + k] = rgb[3 * i + k];
      double nearest = std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < nlev; ++l) {
        out.acc[l][p] = res.levels[l].acc.data()[i];
        if (!lists[l][i].empty()) nearest = std::min(nearest, lists[l][i].front().t);
      }
      if (nearest < std::numeric_limits<double>::infinity()) out.depth[p] = ray_depth(camera, rays[i], nearest);
    }
  };

  if (options.parallel) {
#pragma omp parallel for schedule(dynamic, 1)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) run_chunk(static_cast<std::size_t>(c));
  } else {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  }
  return out;
}

}  // namespace dnmp
