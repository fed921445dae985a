#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dnmp/autodiff/ops.hpp"
#include "dnmp/autodiff/tape.hpp"
#include "dnmp/log.hpp"
#include "dnmp/render.hpp"
#include "dnmp/train.hpp"
#include "scene_fixture.hpp"
#include "test_util.hpp"

using namespace dnmp;
using ad::Tensor;

namespace {

DepthRender depth_of(std::vector<double> values, std::vector<std::uint8_t> covered) {
  DepthRender r;
  const std::size_t n = values.size();
  r.depth = Tensor({1, n}, std::move(values));
  r.covered = std::move(covered);
  for (std::size_t p = 0; p < n; ++p) {
    if (r.covered[p]) r.covered_pixels.push_back(p);
  }
  return r;
}

DepthView view_of(std::vector<double> depth, std::vector<std::uint8_t> valid) {
  DepthView v;
  v.camera.width = static_cast<int>(depth.size());
  v.camera.height = 1;
  v.depth = std::move(depth);
  v.valid = std::move(valid);
  return v;
}

// Depth supervision equal to the scene's own level-l depth.
DepthView self_view(const SceneModel& s, std::size_t level, const Camera& cam) {
  const auto r = rasterize_depth(s.world_vertices(level), *s.geometry(level), cam);
  DepthView v;
  v.camera = cam;
  v.depth.assign(r.depth.data().begin(), r.depth.data().end());
  v.valid = r.covered;
  return v;
}

ImageView image_of(const SceneModel& s, const Camera& cam, double tint) {
  auto r = render_image(s, cam);
  for (std::size_t i = 0; i < r.rgb.size(); ++i) r.rgb[i] = std::clamp(r.rgb[i] * tint + 0.05 * (i % 3), 0.0, 1.0);
  return {cam, r.rgb};
}

std::vector<std::vector<double>> snapshot(const std::vector<Tensor>& ps) {
  std::vector<std::vector<double>> out;
  for (const auto& p : ps) out.push_back(test::values(p));
  return out;
}

}  // namespace

TEST(GeometryLoss, ZeroWhenEqualAndOffsetWhenShifted) {
  const std::vector<double> d{2.0, 2.5, 3.0, 1.0};
  const std::vector<std::uint8_t> all{1, 1, 1, 1};
  EXPECT_EQ(geometry_loss(depth_of(d, all), view_of(d, all)).item(), 0.0);
  auto shifted = d;
  for (auto& x : shifted) x += 0.25;
  EXPECT_DOUBLE_EQ(geometry_loss(depth_of(shifted, all), view_of(d, all)).item(), 0.25);
}

TEST(GeometryLoss, MasksToValidAndCovered) {
  const std::size_t n = 400;
  const auto pred = test::random_values(n, 1, 1.0, 3.0);
  const auto gt = test::random_values(n, 2, 1.0, 3.0);
  std::mt19937_64 rng(3);
  std::vector<std::uint8_t> valid(n), covered(n);
  for (std::size_t i = 0; i < n; ++i) {
    valid[i] = rng() % 2;
    covered[i] = rng() % 4 != 0;
  }
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (valid[i] && covered[i]) {
      sum += std::abs(pred[i] - gt[i]);
      ++count;
    }
  }
  auto masked_pred = pred;
  for (std::size_t i = 0; i < n; ++i) {
    if (!covered[i]) masked_pred[i] = 0.0;
  }
  EXPECT_NEAR(geometry_loss(depth_of(masked_pred, covered), view_of(gt, valid)).item(), sum / count, 1e-14);
}

TEST(GeometryLoss, NoOverlapIsSkippedWithWarning) {
  log::set_quiet(true);
  const auto before = log::warning_count();
  const auto loss = geometry_loss(depth_of({1.0, 2.0}, {1, 0}), view_of({1.5, 2.5}, {0, 1}));
  EXPECT_FALSE(loss.defined());
  EXPECT_GT(log::warning_count(), before);
  log::set_quiet(false);
}

TEST(DepthView, ValidateRejectsBadDepth) {
  auto v = view_of({1.0, -1.0}, {1, 1});
  EXPECT_THROW(v.validate(), std::invalid_argument);
  v.valid = {1, 0};
  EXPECT_NO_THROW(v.validate());
}

TEST(FitShapes, GradientMatchesFiniteDifferenceOnOnePrimitive) {
  // One primitive, one level, depth from a shifted copy of itself.
  const PointCloud one{Tensor({1, 3}, {0.2, 0.1, 3.2})};
  const auto tmpl = build_icosphere(1);
  auto dec = DecoderParams::create(tmpl.mesh.vertex_count(), 5);
  {
    auto w = dec.mlp.layers.back().weight.mutable_data();
    const auto r = test::random_values(w.size(), 6, -0.02, 0.02);
    std::copy(r.begin(), r.end(), w.begin());
  }
  SceneConfig cfg;
  cfg.voxel_sizes = {1.0};
  cfg.max_hits = {2};
  auto s = init_scene(one, cfg, dec, tmpl, test::tiny_radiance(), 1);
  const auto cam = test::tiny_camera(32, 24);
  auto target = self_view(s, 0, cam);
  for (auto& d : target.depth) d = d > 0 ? d + 0.05 : d;
  const auto geom = s.geometry(0);
  auto loss_at = [&](const Tensor& z) {
    auto saved = test::values(s.levels[0].latents);
    std::copy(z.data().begin(), z.data().end(), s.levels[0].latents.mutable_data().begin());
    // Assignment frozen at the unperturbed geometry.
    const auto out = geometry_loss(rasterize_depth(s.world_vertices(0), *geom, cam), target);
    std::copy(saved.begin(), saved.end(), s.levels[0].latents.mutable_data().begin());
    return out;
  };
  Tensor z0 = s.levels[0].latents.clone();
  ad::Tape tape;
  {
    ad::TapeScope scope(tape);
    tape.backward(geometry_loss(rasterize_depth(s.world_vertices(0), *geom, cam), target));
  }
  const auto analytic = test::values(Tensor(s.levels[0].latents.shape(), std::vector<double>(s.levels[0].latents.grad().begin(), s.levels[0].latents.grad().end())));
  const double h = 1e-5;
  ad::NoGradScope ng;
  for (std::size_t i = 0; i < kLatentDim; ++i) {
    auto up = z0.clone(), down = z0.clone();
    up.mutable_data()[i] += h;
    down.mutable_data()[i] -= h;
    const double numeric = (loss_at(up).item() - loss_at(down).item()) / (2 * h);
    EXPECT_LE(std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])), 1e-3) << i;
  }
}

TEST(FitShapes, StationaryAtOptimum) {
  auto s = test::tiny_scene();
  const std::vector<DepthView> views{self_view(s, 0, test::tiny_camera()), self_view(s, 1, test::tiny_camera())};
  // Each level only sees the view made from itself.
  s.levels.resize(1);
  s.mark_dirty(0);
  const auto r = fit_shapes(s, {views[0]}, {.iterations = 10, .lr = 1e-3, .log_every = 1});
  ASSERT_EQ(r.history.size(), 10u);
  for (std::size_t i = 1; i < r.history.size(); ++i) EXPECT_LE(r.history[i].loss, r.history[i - 1].loss + 1e-6);
}

TEST(FitShapes, KeepsLatentsUnitAndLeavesRadianceUntouched) {
  auto s = test::tiny_scene();
  {
    // A zero last layer makes the latents inert.
    auto w = s.decoder.mlp.layers.back().weight.mutable_data();
    const auto r = test::random_values(w.size(), 8, -0.02, 0.02);
    std::copy(r.begin(), r.end(), w.begin());
  }
  auto target = self_view(s, 0, test::tiny_camera());
  for (auto& d : target.depth) d = d > 0 ? d - 0.1 : d;
  const auto radiance_before = snapshot(s.radiance_parameters());
  std::vector<std::vector<double>> features_before;
  for (const auto& lv : s.levels) features_before.push_back(test::values(lv.features));
  const auto latents_before = test::values(s.levels[0].latents);
  const auto r = fit_shapes(s, {target}, {.iterations = 5, .lr = 1e-2, .log_every = 1});
  EXPECT_FALSE(r.aborted);
  EXPECT_NE(test::values(s.levels[0].latents), latents_before);
  for (const auto& lv : s.levels) EXPECT_LE(max_unit_norm_error(lv.latents), 1e-9);
  EXPECT_EQ(snapshot(s.radiance_parameters()), radiance_before);
  for (std::size_t l = 0; l < s.levels.size(); ++l) EXPECT_EQ(test::values(s.levels[l].features), features_before[l]);
  EXPECT_EQ(r.history.front().stage, "shape:0");
  EXPECT_EQ(r.history.back().stage, "shape:1");
}

TEST(FitShapes, DirectModeMovesOffsetsOnly) {
  auto s = test::tiny_scene(ShapeMode::kDirect);
  auto target = self_view(s, 0, test::tiny_camera());
  for (auto& d : target.depth) d = d > 0 ? d - 0.1 : d;
  const auto latents = test::values(s.levels[0].latents);
  fit_shapes(s, {target}, {.iterations = 3, .lr = 1e-2, .log_every = 1});
  EXPECT_EQ(test::values(s.levels[0].latents), latents);
  double moved = 0;
  for (double v : s.levels[0].offsets.data()) moved += std::abs(v);
  EXPECT_GT(moved, 0.0);
}

TEST(FitShapes, DeterministicHistory) {
  auto run = [] {
    auto s = test::tiny_scene();
    auto target = self_view(s, 0, test::tiny_camera());
    for (auto& d : target.depth) d = d > 0 ? d - 0.1 : d;
    const auto r = fit_shapes(s, {target}, {.iterations = 4, .lr = 1e-2, .log_every = 1});
    std::vector<double> out;
    for (const auto& h : r.history) out.push_back(h.loss);
    for (const auto& lv : s.levels) {
      const auto z = test::values(lv.latents);
      out.insert(out.end(), z.begin(), z.end());
    }
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(RadianceLoss, HandValues) {
  const Tensor pred({1, 3}, {0.6, 0.2, 0.3});
  EXPECT_NEAR(radiance_loss(pred, {0.5, 0.2, 0.3}).item(), 0.01, 1e-15);
  EXPECT_EQ(radiance_loss(pred, {0.6, 0.2, 0.3}).item(), 0.0);
  EXPECT_THROW(radiance_loss(pred, {0.1, 0.2}), std::invalid_argument);
}

TEST(RadianceLoss, FeatureGradientThroughRenderPath) {
  auto s = test::tiny_scene();
  const auto cam = test::tiny_camera();
  std::vector<Ray> rays;
  for (int y = 6; y < 12; ++y) {
    for (int x = 8; x < 16; ++x) rays.push_back(cam.pixel_ray(x, y));
  }
  const auto hits = trace_rays(s, rays);
  std::vector<std::vector<const std::vector<RayHit>*>> ptrs(s.levels.size());
  for (std::size_t l = 0; l < s.levels.size(); ++l) {
    for (const auto& h : hits[l]) ptrs[l].push_back(&h);
  }
  const auto target = test::random_values(3 * rays.size(), 4, 0, 1);
  // The first hit vertex of the first ray on level 0.
  ASSERT_FALSE(hits[0][0].empty());
  const auto& face = s.geometry(0)->faces[hits[0][0][0].global_face];
  const std::size_t row = face[0];
  auto& features = s.levels[0].features;
  features.zero_grad();
  {
    ad::Tape tape;
    ad::TapeScope scope(tape);
    tape.backward(radiance_loss(shade_rays(s, rays, ptrs).rgb, target));
  }
  const std::size_t c = features.cols();
  const std::vector<double> analytic(features.grad().begin() + row * c, features.grad().begin() + (row + 1) * c);
  ad::NoGradScope ng;
  const double h = 1e-5;
  double worst = 0;
  for (std::size_t k = 0; k < c; ++k) {
    const double x = features[row * c + k];
    features.mutable_data()[row * c + k] = x + h;
    const double up = radiance_loss(shade_rays(s, rays, ptrs).rgb, target).item();
    features.mutable_data()[row * c + k] = x - h;
    const double down = radiance_loss(shade_rays(s, rays, ptrs).rgb, target).item();
    features.mutable_data()[row * c + k] = x;
    const double numeric = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(analytic[k] - numeric) / std::max(1.0, std::abs(analytic[k])));
  }
  EXPECT_LE(worst, 1e-3);
}

TEST(TrainRadiance, ZeroLearningRateChangesNothing) {
  auto s = test::tiny_scene();
  const auto cam = test::tiny_camera();
  const std::vector<ImageView> views{image_of(s, cam, 0.8)};
  const auto before = snapshot(s.radiance_parameters());
  const auto r = train_radiance(s, views, {}, {.iterations = 5, .lr = 0.0, .batch = 64, .seed = 3, .log_every = 1});
  EXPECT_EQ(snapshot(s.radiance_parameters()), before);
  ASSERT_EQ(r.history.size(), 5u);
  // Different batches, same parameters: every logged loss is a fresh batch of the same model.
  auto again = s.clone();
  const auto r2 = train_radiance(again, views, {}, {.iterations = 5, .lr = 0.0, .batch = 64, .seed = 3, .log_every = 1});
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(r.history[i].loss, r2.history[i].loss);
}

TEST(TrainRadiance, DeterministicAndLeavesShapesUntouched) {
  auto run = [](std::vector<double>& latents_after, std::vector<double>& latents_before) {
    auto s = test::tiny_scene();
    const auto cam = test::tiny_camera();
    const std::vector<ImageView> views{image_of(s, cam, 0.7)};
    latents_before = test::values(s.levels[0].latents);
    const auto r = train_radiance(s, views, views, {.iterations = 6, .lr = 1e-3, .batch = 128, .seed = 5, .log_every = 2, .eval_every = 3});
    latents_after = test::values(s.levels[0].latents);
    std::vector<double> out;
    for (const auto& h : r.history) out.insert(out.end(), {h.loss, h.psnr});
    return out;
  };
  std::vector<double> a1, b1, a2, b2;
  const auto h1 = run(a1, b1);
  const auto h2 = run(a2, b2);
  ASSERT_EQ(h1.size(), h2.size());
  for (std::size_t i = 0; i < h1.size(); ++i) {
    if (std::isnan(h1[i])) {
      EXPECT_TRUE(std::isnan(h2[i]));
    } else {
      EXPECT_EQ(h1[i], h2[i]);
    }
  }
  EXPECT_EQ(a1, b1);
}

TEST(TrainRadiance, LossDecreases) {
  auto s = test::tiny_scene();
  const auto cam = test::tiny_camera();
  const std::vector<ImageView> views{image_of(s, cam, 0.5)};
  const auto r = train_radiance(s, views, {}, {.iterations = 60, .lr = 5e-3, .batch = 256, .seed = 1, .log_every = 59});
  ASSERT_EQ(r.history.size(), 2u);
  EXPECT_LT(r.history.back().loss, 0.5 * r.history.front().loss);
}

TEST(TrainRadiance, NonFiniteLossRestoresAndStops) {
  log::set_quiet(true);
  auto s = test::tiny_scene();
  const auto cam = test::tiny_camera();
  const std::vector<ImageView> views{image_of(s, cam, 0.5)};
  s.background.mutable_data()[0] = NAN;
  const auto before = snapshot(s.radiance_parameters());
  const auto r = train_radiance(s, views, {}, {.iterations = 5, .lr = 1e-3, .batch = 64, .seed = 1, .log_every = 1});
  EXPECT_TRUE(r.aborted);
  const auto after = snapshot(s.radiance_parameters());
  ASSERT_EQ(after.size(), before.size());
  for (std::size_t i = 0; i + 1 < after.size(); ++i) EXPECT_EQ(after[i], before[i]);
  log::set_quiet(false);
}

TEST(EstimateBackground, MeanOfMissedRays) {
  auto s = test::tiny_scene();
  const auto cam = test::tiny_camera();
  ImageView v{cam, std::vector<double>(3 * cam.pixel_count(), 0.0)};
  std::vector<Ray> rays;
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) rays.push_back(cam.pixel_ray(x, y));
  }
  const auto hits = trace_rays(s, rays);
  std::size_t misses = 0;
  double sum = 0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    v.rgb[3 * r] = 0.1 + 0.8 * static_cast<double>(r % 7) / 7.0;
    v.rgb[3 * r + 1] = 0.3;
    v.rgb[3 * r + 2] = 0.9;
    if (hits[0][r].empty() && hits[1][r].empty()) {
      ++misses;
      sum += v.rgb[3 * r];
    }
  }
  ASSERT_GT(misses, 0u);
  EXPECT_EQ(estimate_background(s, {v}), misses);
  EXPECT_NEAR(s.background[0], sum / misses, 1e-12);
  EXPECT_NEAR(s.background[1], 0.3, 1e-12);
  EXPECT_NEAR(s.background[2], 0.9, 1e-12);
}
