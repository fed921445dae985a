#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "dnmp/autodiff/tape.hpp"
#include "dnmp/io/cameras.hpp"
#include "dnmp/io/checkpoint.hpp"
#include "dnmp/io/config.hpp"
#include "dnmp/io/depth.hpp"
#include "dnmp/io/image.hpp"
#include "dnmp/io/metrics.hpp"
#include "dnmp/io/ply.hpp"
#include "dnmp/io/synthetic.hpp"
#include "dnmp/log.hpp"
#include "dnmp/render.hpp"
#include "scene_fixture.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace dnmp;
using namespace dnmp::io;
using ad::Tensor;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("dnmp_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }
  void write_text(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }
  std::string read_bytes(const fs::path& p) const {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }
  void truncate(const fs::path& p, std::size_t drop) const { fs::resize_file(p, fs::file_size(p) - drop); }

  fs::path dir_;
};

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

using Ply = TempDir;

TEST_F(Ply, ReadsHandWrittenFile) {
  write_text("a.ply",
             "ply\nformat ascii 1.0\ncomment three points\nelement vertex 3\nproperty float x\nproperty float y\n"
             "property float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\n"
             "end_header\n0 0 1 255\n1.5 -2 3 0\n1e-3 4 5.25 7\n3 0 1 2\n");
  const auto c = load_ply(path("a.ply"));
  EXPECT_EQ(c.points.shape(), (ad::Shape{3, 3}));
  EXPECT_EQ(test::values(c.points), (std::vector<double>{0, 0, 1, 1.5, -2, 3, 1e-3, 4, 5.25}));
}

TEST_F(Ply, RoundTripIsExact) {
  const PointCloud c{test::random_tensor({50, 3}, 3, -10, 10)};
  save_ply(c, path("r.ply"));
  EXPECT_EQ(test::values(load_ply(path("r.ply")).points), test::values(c.points));
}

TEST_F(Ply, RejectsBinaryAndNamesBadLine) {
  write_text("b.ply", "ply\nformat binary_little_endian 1.0\nelement vertex 1\nproperty float x\nend_header\n");
  EXPECT_NE(error_of([&] { load_ply(path("b.ply")); }).find("ascii"), std::string::npos);
  write_text("c.ply",
             "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\n"
             "end_header\n0 0 0\n1 zz 2\n");
  EXPECT_NE(error_of([&] { load_ply(path("c.ply")); }).find(":9:"), std::string::npos);
  write_text("d.ply",
             "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
             "end_header\n0 0 0\n");
  EXPECT_FALSE(error_of([&] { load_ply(path("d.ply")); }).empty());
}

using Png = TempDir;

TEST_F(Png, QuantisesToNearestByte) {
  EXPECT_EQ(to_byte(0.5), 128);
  EXPECT_EQ(to_byte(0.0), 0);
  EXPECT_EQ(to_byte(1.0), 255);
  log::set_quiet(true);
  EXPECT_EQ(to_byte(1.7), 255);
  EXPECT_EQ(to_byte(-0.2), 0);
  log::set_quiet(false);
}

TEST_F(Png, RoundTripWithinOneLevel) {
  Image img(17, 9);
  const auto v = test::random_values(img.rgb.size(), 5, 0, 1);
  img.rgb = v;
  for (const char* ext : {"x.png", "x.ppm"}) {
    write_image(img, path(ext));
    const auto back = read_image(path(ext));
    ASSERT_EQ(back.width, 17);
    ASSERT_EQ(back.height, 9);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_LE(std::abs(back.rgb[i] - v[i]), 0.5 / 255 + 1e-12) << ext;
  }
}

TEST_F(Png, SinglePixel) {
  Image img(1, 1);
  img.rgb = {0.5, 0.25, 1.0};
  write_image(img, path("p.png"));
  const auto back = read_image(path("p.png"));
  EXPECT_EQ(back.rgb, (std::vector<double>{128 / 255.0, 64 / 255.0, 1.0}));
  EXPECT_FALSE(error_of([&] { read_image(path("missing.png")); }).empty());
}

using Depth = TempDir;

TEST_F(Depth, RoundTripAndTruncation) {
  DepthMap d{5, 3, {}};
  for (int i = 0; i < 15; ++i) d.values.push_back(i % 4 == 0 ? 0.0f : 0.5f + 0.25f * static_cast<float>(i));
  write_depth(d, path("d.bin"));
  EXPECT_EQ(fs::file_size(path("d.bin")), 8u + 15 * 4);
  const auto back = read_depth(path("d.bin"));
  EXPECT_EQ(back.width, 5u);
  EXPECT_EQ(back.height, 3u);
  EXPECT_EQ(back.values, d.values);
  truncate(path("d.bin"), 4);
  EXPECT_NE(error_of([&] { read_depth(path("d.bin")); }).find("truncated"), std::string::npos);
  DepthMap bad{2, 2, {1.0f}};
  EXPECT_THROW(write_depth(bad, path("e.bin")), std::invalid_argument);
}

using Checkpoint = TempDir;

TEST_F(Checkpoint, RoundTripRendersIdentically) {
  auto s = test::tiny_scene();
  s.levels[0].features.mutable_data()[3] = 0.7;
  s.background.mutable_data()[1] = 0.2;
  save_checkpoint(s, {{"note", "x"}}, path("s.ckpt"));
  const auto loaded = load_checkpoint(path("s.ckpt"));
  EXPECT_EQ(loaded.run_config["note"], "x");
  const auto cam = test::tiny_camera();
  const auto a = render_image(s, cam);
  const auto b = render_image(loaded.scene, cam);
  EXPECT_EQ(a.rgb, b.rgb);
  EXPECT_EQ(a.depth, b.depth);
  save_checkpoint(loaded.scene, loaded.run_config, path("t.ckpt"));
  EXPECT_EQ(read_bytes(path("s.ckpt")), read_bytes(path("t.ckpt")));
}

TEST_F(Checkpoint, RejectsTruncationAndWrongPreset) {
  const auto s = test::tiny_scene();
  save_checkpoint(s, {}, path("s.ckpt"));
  EXPECT_NO_THROW(load_checkpoint(path("s.ckpt"), test::tiny_radiance()));
  EXPECT_NE(error_of([&] { load_checkpoint(path("s.ckpt"), RadianceConfig::full()); }).find("shape mismatch"),
            std::string::npos);
  fs::copy_file(path("s.ckpt"), path("t.ckpt"));
  truncate(path("t.ckpt"), 9);
  EXPECT_FALSE(error_of([&] { load_checkpoint(path("t.ckpt")); }).empty());
  write_text("junk.ckpt", "not a checkpoint at all");
  EXPECT_FALSE(error_of([&] { load_checkpoint(path("junk.ckpt")); }).empty());
}

TEST_F(Checkpoint, CodecRoundTrip) {
  Codec c;
  c.template_level = 1;
  c.encoder = EncoderParams::create(3);
  c.decoder = DecoderParams::create(build_icosphere(1).mesh.vertex_count(), 4);
  save_codec(c, path("c.bin"));
  const auto back = load_codec(path("c.bin"));
  EXPECT_EQ(back.template_level, 1);
  auto z = test::random_tensor({1, kLatentDim}, 2, -1, 1);
  renormalize_rows(z);
  const auto tmpl = build_icosphere(1);
  EXPECT_EQ(test::values(decode_latent(z, back.decoder, tmpl).vertices), test::values(decode_latent(z, c.decoder, tmpl).vertices));
  EXPECT_FALSE(error_of([&] { load_checkpoint(path("c.bin")); }).empty());
}

TEST(Metrics, PsnrValues) {
  const std::vector<double> a{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  EXPECT_EQ(psnr(a, a), kPsnrIdentical);
  auto b = a;
  for (auto& x : b) x += 0.1;
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
  EXPECT_THROW(psnr(a, std::vector<double>{0.1}), std::invalid_argument);
}

TEST(Metrics, SsimValues) {
  Image a(24, 20);
  a.rgb = test::random_values(a.rgb.size(), 1, 0, 1);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  Image neg = a;
  for (auto& x : neg.rgb) x = 1.0 - x;
  EXPECT_LT(ssim(a, neg), 1.0);
  EXPECT_NEAR(ssim(Image(16, 16, 0.3), Image(16, 16, 0.3)), 1.0, 1e-12);
  Image noisy = a;
  const auto n = test::random_values(a.rgb.size(), 2, -0.05, 0.05);
  for (std::size_t i = 0; i < n.size(); ++i) noisy.rgb[i] += n[i];
  EXPECT_GT(ssim(a, noisy), ssim(a, neg));
  EXPECT_NEAR(ssim(a, noisy), ssim(noisy, a), 1e-12);
}

TEST(Config, RoundTripsAndRejectsUnknownKeys) {
  RunConfig c;
  c.seed = 42;
  c.held_out_views = {1, 4};
  c.scene.shape_mode = ShapeMode::kDirect;
  c.apply_preset("lightweight");
  const auto j = to_json(c);
  EXPECT_EQ(to_json(run_config_from_json(j)), j);
  auto bad = j;
  bad["shape"]["iterationz"] = 3;
  EXPECT_NE(error_of([&] { run_config_from_json(bad); }).find("shape.iterationz"), std::string::npos);
  bad = j;
  bad["shape"]["lr"] = "fast";
  EXPECT_NE(error_of([&] { run_config_from_json(bad); }).find("wrong type"), std::string::npos);
  bad = j;
  bad["radiance_train"]["lr"] = -1.0;
  EXPECT_THROW(run_config_from_json(bad), std::invalid_argument);
  bad = j;
  bad["scene"]["shape_mode"] = "sideways";
  EXPECT_THROW(run_config_from_json(bad), std::invalid_argument);
  EXPECT_THROW(c.apply_ablation("bogus"), std::invalid_argument);
  c.apply_ablation("no-hierarchy");
  EXPECT_EQ(c.scene.voxel_sizes.size(), 1u);
}

using Cameras = TempDir;

TEST_F(Cameras, RoundTrip) {
  const std::vector<Camera> cams{test::tiny_camera(), look_at(Vec3(1, 2, 3), Vec3(0, 0, 9), Vec3(0, -1, 0), 30, 31, 8, 6)};
  save_cameras(cams, path("c.json"));
  const auto back = load_cameras(path("c.json"));
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].fx, cams[i].fx);
    EXPECT_EQ(back[i].width, cams[i].width);
    EXPECT_EQ(back[i].rotation, cams[i].rotation);
    EXPECT_EQ(back[i].translation, cams[i].translation);
  }
}

namespace {

Camera canonical(int w, int h, double f) {
  Camera c;
  c.fx = c.fy = f;
  c.cx = w / 2.0;
  c.cy = h / 2.0;
  c.width = w;
  c.height = h;
  return c;
}

}  // namespace

TEST(Synthetic, FrontoParallelQuadAtTwoMeters) {
  SyntheticScene s;
  s.quads.push_back({Vec3(-3, -3, 2), Vec3(6, 0, 0), Vec3(0, 6, 0), Texture::kSine});
  const auto d = render_depth(s, canonical(16, 12, 10));
  for (double v : d) EXPECT_NEAR(v, 2.0, 1e-12);
}

TEST(Synthetic, AnalyticDepthMatchesRasterizedMesh) {
  auto s = make_synthetic_scene("room-corner");
  auto g = std::make_shared<LevelGeometry>();
  for (const auto& q : s.quads) {
    const auto b = static_cast<std::uint32_t>(g->vertices.size());
    for (const Vec3& p : {q.origin, Vec3(q.origin + q.u), Vec3(q.origin + q.u + q.v), Vec3(q.origin + q.v)}) {
      g->vertices.push_back(p);
      g->normals.push_back(Vec3(0, 0, -1));
    }
    g->faces.push_back({b, b + 1, b + 2});
    g->faces.push_back({b, b + 2, b + 3});
  }
  for (std::uint32_t f = 0; f < g->faces.size(); ++f) {
    g->face_primitive.push_back(f);
    g->face_local.push_back(0);
  }
  std::vector<double> v;
  for (const auto& p : g->vertices) v.insert(v.end(), {p.x(), p.y(), p.z()});
  const Tensor world({g->vertices.size(), 3}, v);
  s.cylinders.clear();
  for (const auto& cam : s.cameras) {
    const auto analytic = render_depth(s, cam);
    const auto raster = rasterize_depth(world, *g, cam);
    for (std::size_t p = 0; p < analytic.size(); ++p) {
      if (raster.covered[p]) {
        EXPECT_NEAR(raster.depth[p], analytic[p], 1e-6);
      }
    }
  }
}

using SyntheticFiles = TempDir;

TEST_F(SyntheticFiles, WritingIsReproducible) {
  const auto s = make_synthetic_scene("quad");
  write_synthetic_scene(s, 3, path("a"));
  write_synthetic_scene(s, 3, path("b"));
  for (const auto& e : fs::recursive_directory_iterator(path("a"))) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), path("a"));
    EXPECT_EQ(read_bytes(e.path()), read_bytes(path("b") / rel)) << rel;
  }
  EXPECT_TRUE(fs::exists(path("a") / "depth_dropout"));
  EXPECT_THROW(make_synthetic_scene("castle"), std::invalid_argument);
}

// The command-line tool, run as a subprocess.
class Cli : public TempDir {
 protected:
  int run(const std::string& args) const {
    const std::string cmd = std::string(DNMP_CLI) + " " + args + " >" + (dir_ / "stdout.txt").string() + " 2>" +
                            (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string err() const { return read_bytes(dir_ / "stderr.txt"); }
  std::string out() const { return read_bytes(dir_ / "stdout.txt"); }
};

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate --out " + path("o").string()), 2);
  EXPECT_EQ(run("render --out " + path("o").string()), 2);
  EXPECT_EQ(run("render --scene-dir /nonexistent --checkpoint /nonexistent --out " + path("o").string()), 2);
  EXPECT_EQ(run("gen-scene --scene quad --preset huge --out " + path("o").string()), 2);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, RuntimeErrorsExitOne) {
  write_text("bad.json", R"({"shape": {"iterations": 3, "speed": 9}})");
  EXPECT_EQ(run("train-codec --config " + path("bad.json").string() + " --out " + path("o").string()), 1);
  EXPECT_NE(err().find("shape.speed"), std::string::npos);
  EXPECT_EQ(run("gen-scene --scene castle --out " + path("g").string()), 1);
}

TEST_F(Cli, LockedOutputIsRefused) {
  fs::create_directories(path("o"));
  write_text("o/.lock", "1\n");
  EXPECT_EQ(run("gen-scene --scene quad --out " + path("o").string()), 1);
  EXPECT_NE(err().find("locked"), std::string::npos);
}

TEST_F(Cli, SmallPipelineEndToEnd) {
  write_text("cfg.json", R"({
    "template_level": 1,
    "held_out_views": [2],
    "scene": {"voxel_sizes": [1.0, 2.0]},
    "codec": {"database_size": 8, "epochs": 1, "samples": 64},
    "shape": {"iterations": 3, "log_every": 1},
    "radiance_train": {"iterations": 4, "batch": 64, "log_every": 1, "eval_every": 2}
  })");
  const std::string cfg = " --config " + path("cfg.json").string() + " --preset lightweight";
  const std::string scene = path("scene").string();
  ASSERT_EQ(run("gen-scene --scene quad --seed 2 --out " + scene), 0) << err();
  ASSERT_EQ(run("train-codec" + cfg + " --out " + path("codec").string()), 0) << err();
  ASSERT_EQ(run("fit-shape" + cfg + " --scene-dir " + scene + " --checkpoint " + path("codec/codec.bin").string() +
                " --out " + path("fit").string()),
            0)
      << err();
  ASSERT_EQ(run("train-radiance" + cfg + " --scene-dir " + scene + " --checkpoint " + path("fit/scene.ckpt").string() +
                " --out " + path("rad").string()),
            0)
      << err();
  EXPECT_TRUE(fs::exists(path("rad/radiance_loss.csv")));
  const std::string ckpt = path("rad/scene.ckpt").string();
  ASSERT_EQ(run("render" + cfg + " --scene-dir " + scene + " --checkpoint " + ckpt + " --views 0,2 --out " +
                path("ren").string()),
            0)
      << err();
  EXPECT_TRUE(fs::exists(path("ren/000.png")));
  EXPECT_TRUE(fs::exists(path("ren/002_depth.bin")));
  EXPECT_FALSE(fs::exists(path("ren/001.png")));
  EXPECT_FALSE(fs::exists(path("ren/.lock")));

  // Preset mismatch.
  EXPECT_EQ(run("render --preset full --scene-dir " + scene + " --checkpoint " + ckpt + " --out " + path("x").string()), 1);
  EXPECT_NE(err().find("shape mismatch"), std::string::npos);

  // Ground truth against itself.
  ASSERT_EQ(run("eval --scene-dir " + scene + " --renders " + scene + "/gt_rgb --views 0,1 --out " + path("ev").string()),
            0)
      << err();
  const auto report = nlohmann::json::parse(read_bytes(path("ev/eval.json")));
  EXPECT_EQ(report["mean_psnr"], "inf");
  EXPECT_NEAR(report["mean_ssim"].get<double>(), 1.0, 1e-12);

  ASSERT_EQ(run("edit --checkpoint " + ckpt + " --op remove --box -9,-9,-9,9,9,9 --out " + path("ed").string()), 0)
      << err();
  ASSERT_EQ(run("render --scene-dir " + scene + " --checkpoint " + path("ed/scene.ckpt").string() + " --views 1 --out " +
                path("ren_ed").string()),
            0);
  const auto empty = read_image(path("ren_ed/001.png"));
  for (std::size_t i = 3; i < empty.rgb.size(); ++i) EXPECT_EQ(empty.rgb[i], empty.rgb[i % 3]);

  ASSERT_EQ(run("bench --scene-dir " + scene + " --checkpoint " + ckpt + " --out " + path("be").string()), 0) << err();
  EXPECT_GT(nlohmann::json::parse(read_bytes(path("be/bench.json")))["ms_per_1k_pixels_serial"].get<double>(), 0.0);
}

TEST(Render, ParallelMatchesSerialAndRepeats) {
  const auto s = test::tiny_scene();
  const auto cam = test::tiny_camera(40, 30);
  const auto par = render_image(s, cam, {.parallel = true, .chunk = 97});
  const auto ser = render_image(s, cam, {.parallel = false, .chunk = 97});
  EXPECT_EQ(par.rgb, ser.rgb);
  EXPECT_EQ(par.depth, ser.depth);
  EXPECT_EQ(par.acc, ser.acc);
  EXPECT_EQ(render_image(s, cam, {.parallel = true, .chunk = 97}).rgb, par.rgb);
}
