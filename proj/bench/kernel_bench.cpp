// Parallel kernels against their serial references.
//   ./kernel_bench --benchmark_filter=Gemm

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "dnmp/kernels.hpp"
#include "dnmp/mesh.hpp"
#include "dnmp/raster.hpp"
#include "dnmp/render.hpp"
#include "dnmp/scene.hpp"
#include "dnmp/shape_codec.hpp"

using namespace dnmp;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool kParallel>
void BM_Gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0)), n = static_cast<std::size_t>(state.range(1)),
             k = static_cast<std::size_t>(state.range(2));
  const auto a = random_values(m * k, 1), b = random_values(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    if constexpr (kParallel) {
      kernels::gemm(kernels::Trans::kNo, kernels::Trans::kNo, m, n, k, a.data(), b.data(), c.data(), false);
    } else {
      kernels::gemm_reference(kernels::Trans::kNo, kernels::Trans::kNo, m, n, k, a.data(), b.data(), c.data(), false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * n * k));
}
// Batch x in -> out shapes of the radiance MLP layers.
BENCHMARK(BM_Gemm<true>)->Name("Gemm/parallel")->Args({1024, 256, 69})->Args({1024, 256, 256})->Args({4096, 128, 128});
BENCHMARK(BM_Gemm<false>)->Name("Gemm/serial")->Args({1024, 256, 69})->Args({1024, 256, 256})->Args({4096, 128, 128});

std::shared_ptr<LevelGeometry> random_soup(std::size_t faces) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  auto g = std::make_shared<LevelGeometry>();
  for (std::size_t i = 0; i < faces; ++i) {
    const Vec3 c(2 * u(rng), 2 * u(rng), 4 + 2 * u(rng));
    for (int k = 0; k < 3; ++k) {
      g->vertices.push_back(c + 0.2 * Vec3(u(rng), u(rng), u(rng)));
      g->normals.push_back(Vec3(0, 0, -1));
    }
    const auto b = static_cast<std::uint32_t>(3 * i);
    g->faces.push_back({b, b + 1, b + 2});
    g->face_primitive.push_back(static_cast<std::uint32_t>(i));
    g->face_local.push_back(0);
  }
  return g;
}

Camera bench_camera(int w, int h) {
  Camera c;
  c.width = w;
  c.height = h;
  c.fx = c.fy = 0.8 * w;
  c.cx = w / 2.0;
  c.cy = h / 2.0;
  return c;
}

template <bool kParallel>
void BM_ZBuffer(benchmark::State& state) {
  const auto g = random_soup(static_cast<std::size_t>(state.range(0)));
  const auto cam = bench_camera(160, 120);
  for (auto _ : state) {
    auto zb = kParallel ? rasterize_nearest(*g, cam) : rasterize_nearest_reference(*g, cam);
    benchmark::DoNotOptimize(zb.t.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * cam.pixel_count()));
}
BENCHMARK(BM_ZBuffer<true>)->Name("ZBuffer/parallel")->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ZBuffer<false>)->Name("ZBuffer/serial")->Arg(2000)->Arg(20000)->Unit(benchmark::kMillisecond);

const SceneModel& bench_scene() {
  static const SceneModel scene = [] {
    std::vector<double> p;
    for (int j = 0; j < 41; ++j) {
      for (int i = 0; i < 41; ++i) p.insert(p.end(), {-2.0 + 0.1 * i, -1.5 + 0.075 * j, 3.0 + 0.02 * i});
    }
    const PointCloud cloud{ad::Tensor({41 * 41, 3}, std::move(p))};
    const auto tmpl = build_icosphere(2);
    const auto dec = DecoderParams::create(tmpl.mesh.vertex_count(), 1);
    return init_scene(cloud, SceneConfig{}, dec, tmpl, RadianceConfig::from_preset("lightweight"), 1);
  }();
  return scene;
}

template <bool kParallel>
void BM_Render(benchmark::State& state) {
  const auto& scene = bench_scene();
  const auto cam = bench_camera(96, 72);
  for (std::size_t l = 0; l < scene.levels.size(); ++l) scene.bvh(l);
  for (auto _ : state) {
    auto r = render_image(scene, cam, {.parallel = kParallel, .chunk = 1024});
    benchmark::DoNotOptimize(r.rgb.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * cam.pixel_count()));
}
BENCHMARK(BM_Render<true>)->Name("Render/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Render<false>)->Name("Render/serial")->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
