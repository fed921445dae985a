#include "dnmp/train.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "dnmp/autodiff/adam.hpp"
#include "dnmp/autodiff/ops.hpp"
#include "dnmp/autodiff/tape.hpp"
#include "dnmp/io/metrics.hpp"
#include "dnmp/log.hpp"
#include "dnmp/random.hpp"
#include "dnmp/render.hpp"

namespace dnmp {

void DepthView::validate() const {
  camera.validate();
  const std::size_t n = camera.pixel_count();
  if (depth.size() != n || valid.size() != n) throw std::invalid_argument("depth view size does not match its camera");
  for (std::size_t i = 0; i < n; ++i) {
    if (valid[i] && !(std::isfinite(depth[i]) && depth[i] > 0.0)) {
      throw std::invalid_argument("valid depth values must be finite and positive");
    }
  }
}

ad::Tensor geometry_loss(const DepthRender& rendered, const DepthView& view) {
  if (rendered.depth.numel() != view.depth.size() || view.valid.size() != view.depth.size()) {
    throw std::invalid_argument("geometry_loss: rendered and supervised depth maps differ in size");
  }
  std::vector<std::size_t> idx;
  std::vector<double> target;
  for (auto p : rendered.covered_pixels) {
    if (!view.valid[p]) continue;
    idx.push_back(p);
    target.push_back(view.depth[p]);
  }
  if (idx.empty()) {
    log::warn("depth view has no pixel that is both valid and covered; skipping it");
    return {};
  }
  const std::size_t k = idx.size();
  const ad::Tensor d = ad::gather(rendered.depth, idx, {k, 1});
  return ad::mean(ad::abs(ad::sub(d, ad::Tensor({k, 1}, std::move(target)))));
}

namespace {

std::vector<std::vector<double>> snapshot(const std::vector<ad::Tensor>& params) {
  std::vector<std::vector<double>> s;
  for (const auto& p : params) s.emplace_back(p.data().begin(), p.data().end());
  return s;
}

void restore(std::vector<ad::Tensor>& params, const std::vector<std::vector<double>>& s) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto d = params[i].mutable_data();
    std::copy(s[i].begin(), s[i].end(), d.begin());
  }
}

bool should_log(std::size_t it, std::size_t total, std::size_t every) {
  return (every > 0 && it % every == 0) || it + 1 == total;
}

}  // namespace

FitResult fit_shapes(SceneModel& scene, const std::vector<DepthView>& views, const ShapeFitConfig& cfg) {
  if (!(cfg.lr >= 0.0)) throw std::invalid_argument("shape learning rate must be >= 0");
  for (const auto& v : views) v.validate();
  FitResult result;
  const bool latent = scene.config.shape_mode == ShapeMode::kLatent;
  for (std::size_t l = 0; l < scene.levels.size() && !result.aborted; ++l) {
    if (scene.levels[l].primitive_count() == 0) continue;
    const std::string stage = "shape:" + std::to_string(l);
    auto params = scene.shape_parameters(l);
    ad::Adam opt(params, {.lr = cfg.lr});
    auto good = snapshot(params);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
      const auto geom = scene.geometry(l);
      ad::Tape tape;
      double value = 0.0;
      bool any = false;
      {
        ad::TapeScope scope(tape);
        const ad::Tensor world = scene.world_vertices(l);
        ad::Tensor total;
        for (const auto& view : views) {
          const ad::Tensor loss = geometry_loss(rasterize_depth(world, *geom, view.camera), view);
          if (!loss.defined()) continue;
          total = total.defined() ? ad::add(total, loss) : loss;
        }
        if (total.defined()) {
          any = true;
          value = total.item();
          if (std::isfinite(value)) tape.backward(total);
        }
      }
      if (!any) {
        log::warn(stage + ": no supervised pixel is covered; stopping this level");
        break;
      }
      if (!std::isfinite(value)) {
        restore(params, good);
        log::warn(stage + ": non-finite loss at iteration " + std::to_string(it) + "; restored last good shapes");
        result.aborted = true;
        break;
      }
      if (should_log(it, cfg.iterations, cfg.log_every)) result.history.push_back({it, stage, value});
      opt.step();
      if (latent) renormalize_rows(scene.levels[l].latents);
      good = snapshot(params);
    }
  }
  return result;
}

double depth_error(const SceneModel& scene, std::size_t level, const std::vector<DepthView>& views) {
  const auto geom = scene.geometry(level);
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& view : views) {
    const auto zb = rasterize_nearest(*geom, view.camera);
    for (std::size_t p = 0; p < zb.t.size(); ++p) {
      if (!zb.covered(p) || !view.valid[p]) continue;
      const Ray ray = view.camera.pixel_ray(static_cast<int>(p % view.camera.width),
                                            static_cast<int>(p / view.camera.width));
      sum += std::abs(ray_depth(view.camera, ray, zb.t[p]) - view.depth[p]);
      ++count;
    }
  }
  return count == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(count);
}

ad::Tensor radiance_loss(const ad::Tensor& predicted, const std::vector<double>& target) {
  if (predicted.rank() != 2 || predicted.cols() != 3 || predicted.numel() != target.size()) {
    throw std::invalid_argument("radiance_loss: expected R x 3 prediction and matching target");
  }
  return ad::sum(ad::square(ad::sub(predicted, ad::Tensor(predicted.shape(), target))));
}

namespace {

double mean_psnr(const SceneModel& scene, const std::vector<ImageView>& views) {
  double s = 0.0;
  for (const auto& v : views) s += io::psnr(render_image(scene, v.camera).rgb, v.rgb);
  return s / static_cast<double>(views.size());
}

}  // namespace

std::size_t estimate_background(SceneModel& scene, const std::vector<ImageView>& views) {
  double sum[3] = {0, 0, 0};
  std::size_t misses = 0;
  for (const auto& v : views) {
    std::vector<Ray> rays;
    rays.reserve(v.camera.pixel_count());
    for (int y = 0; y < v.camera.height; ++y) {
      for (int x = 0; x < v.camera.width; ++x) rays.push_back(v.camera.pixel_ray(x, y));
    }
    const auto hits = trace_rays(scene, rays);
    for (std::size_t r = 0; r < rays.size(); ++r) {
      bool any = false;
      for (const auto& level : hits) any = any || !level[r].empty();
      if (any) continue;
      ++misses;
      for (int c = 0; c < 3; ++c) sum[c] += v.rgb[3 * r + c];
    }
  }
  if (misses == 0) return 0;
  auto bg = scene.background.mutable_data();
  for (int c = 0; c < 3; ++c) bg[c] = sum[c] / static_cast<double>(misses);
  return misses;
}

FitResult train_radiance(SceneModel& scene, const std::vector<ImageView>& train, const std::vector<ImageView>& held_out,
                         const RadianceTrainConfig& cfg) {
  if (!(cfg.lr >= 0.0)) throw std::invalid_argument("radiance learning rate must be >= 0");
  if (cfg.batch == 0) throw std::invalid_argument("ray batch size must be positive");
  if (train.empty()) throw std::invalid_argument("train_radiance needs at least one training view");
  std::vector<Ray> rays;
  std::vector<double> colors;
  for (const auto& v : train) {
    v.camera.validate();
    if (v.rgb.size() != 3 * v.camera.pixel_count()) throw std::invalid_argument("training image does not match its camera");
    for (int y = 0; y < v.camera.height; ++y) {
      for (int x = 0; x < v.camera.width; ++x) rays.push_back(v.camera.pixel_ray(x, y));
    }
    colors.insert(colors.end(), v.rgb.begin(), v.rgb.end());
  }
  const LevelHitLists hits = trace_rays(scene, rays);
  const std::size_t nlev = scene.levels.size();

  FitResult result;
  auto params = scene.radiance_parameters();
  ad::Adam opt(params, {.lr = cfg.lr});
  auto good = snapshot(params);
  std::vector<Ray> batch_rays(cfg.batch);
  std::vector<double> target(3 * cfg.batch);
  std::vector<std::vector<const std::vector<RayHit>*>> ptrs(nlev, std::vector<const std::vector<RayHit>*>(cfg.batch));
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    std::mt19937_64 rng(derive_seed(cfg.seed, {0xba7c4, it}));
    std::uniform_int_distribution<std::size_t> pick(0, rays.size() - 1);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const std::size_t r = pick(rng);
      batch_rays[b] = rays[r];
      for (int c = 0; c < 3; ++c) target[3 * b + c] = colors[3 * r + c];
      for (std::size_t l = 0; l < nlev; ++l) ptrs[l][b] = &hits[l][r];
    }
    ad::Tape tape;
    double value;
    {
      ad::TapeScope scope(tape);
      const ad::Tensor loss = radiance_loss(shade_rays(scene, batch_rays, ptrs).rgb, target);
      value = loss.item();
      if (std::isfinite(value)) tape.backward(loss);
    }
    if (!std::isfinite(value)) {
      restore(params, good);
      log::warn("radiance: non-finite loss at iteration " + std::to_string(it) + "; restored last good parameters");
      result.aborted = true;
      break;
    }
    opt.step();
    const bool log_now = should_log(it, cfg.iterations, cfg.log_every);
    if (log_now) good = snapshot(params);
    const bool eval_now =
        !held_out.empty() && cfg.eval_every > 0 && ((it + 1) % cfg.eval_every == 0 || it + 1 == cfg.iterations);
    if (log_now || eval_now) {
      LossRecord rec{it, "radiance", value};
      if (eval_now) rec.psnr = mean_psnr(scene, held_out);
      result.history.push_back(rec);
    }
  }
  return result;
}

}  // namespace dnmp
