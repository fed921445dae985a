#include "dnmp/pipeline.hpp"

#include <fcntl.h>
#include <sys/resource.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "dnmp/io/cameras.hpp"
#include "dnmp/io/checkpoint.hpp"
#include "dnmp/io/dataset.hpp"
#include "dnmp/io/depth.hpp"
#include "dnmp/io/image.hpp"
#include "dnmp/io/metrics.hpp"
#include "dnmp/io/report.hpp"
#include "dnmp/io/synthetic.hpp"
#include "dnmp/random.hpp"
#include "dnmp/render.hpp"
#include "dnmp/train.hpp"

namespace dnmp::pipeline {

OutputLock::OutputLock(const fs::path& dir) {
  fs::create_directories(dir);
  path_ = dir / ".lock";
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    const std::string p = path_.string();
    path_.clear();
    throw std::runtime_error("output directory is locked by another run (" + p + ")");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  if (path_.empty()) return;
  std::error_code ec;
  fs::remove(path_, ec);
}

namespace {

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

std::vector<std::size_t> all_views(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

void check_views(const std::vector<std::size_t>& views, std::size_t count) {
  for (auto v : views) {
    if (v >= count) throw std::invalid_argument("view " + std::to_string(v) + " does not exist (scene has " + std::to_string(count) + ")");
  }
}

}  // namespace

void gen_scene(const std::string& name, std::uint64_t seed, const fs::path& out) {
  const auto scene = io::make_synthetic_scene(name);
  OutputLock lock(out);
  io::write_synthetic_scene(scene, seed, out);
}

void train_codec(const io::RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  OutputLock lock(out);
  const auto tmpl = build_icosphere(cfg.template_level);
  const auto db = generate_patch_database(cfg.codec.database_size, derive_seed(cfg.seed, {0xdb}));
  io::Codec codec;
  codec.template_level = cfg.template_level;
  codec.encoder = EncoderParams::create(derive_seed(cfg.seed, {0xe1}));
  codec.decoder = DecoderParams::create(tmpl.mesh.vertex_count(), derive_seed(cfg.seed, {0xd1}));
  const auto hist = train_autoencoder(db, codec.encoder, codec.decoder, tmpl, cfg.codec.train);
  if (hist.diverged) throw std::runtime_error("codec training diverged; parameters restored to the last good epoch");
  std::vector<LossRecord> rec;
  for (std::size_t e = 0; e < hist.loss.size(); ++e) rec.push_back({e, "codec", hist.loss[e], std::nan("")});
  io::save_codec(codec, out / kCodecFile);
  io::write_loss_csv(rec, out / "codec_loss.csv");
}

void fit_shape(const io::RunConfig& cfg, const fs::path& scene_dir, const fs::path& codec_path, const fs::path& out) {
  cfg.validate();
  const auto data = io::load_dataset(scene_dir, cfg.depth_set);
  check_views(cfg.held_out_views, data.cameras.size());
  const auto codec = io::load_codec(codec_path);
  if (codec.template_level != cfg.template_level) {
    throw std::invalid_argument("codec was trained on template level " + std::to_string(codec.template_level) +
                                ", config asks for " + std::to_string(cfg.template_level));
  }
  OutputLock lock(out);
  const auto tmpl = build_icosphere(cfg.template_level);
  SceneModel scene = init_scene(data.cloud, cfg.scene, codec.decoder, tmpl, cfg.radiance, cfg.seed);
  std::vector<DepthView> train, test;
  io::split_views(data.depths, cfg.held_out_views, train, test);
  const auto result = fit_shapes(scene, train, cfg.shape);
  io::write_loss_csv(result.history, out / "shape_loss.csv");
  io::save_checkpoint(scene, io::to_json(cfg), out / kSceneFile);
  if (result.aborted) throw std::runtime_error("shape fitting hit a non-finite loss; saved the last good shapes");
}

void train_radiance(const io::RunConfig& cfg, const fs::path& scene_dir, const fs::path& checkpoint,
                    const fs::path& out) {
  cfg.validate();
  const auto data = io::load_dataset(scene_dir, cfg.depth_set);
  check_views(cfg.held_out_views, data.cameras.size());
  auto loaded = io::load_checkpoint(checkpoint, cfg.radiance);
  OutputLock lock(out);
  std::vector<ImageView> train, test;
  io::split_views(data.images, cfg.held_out_views, train, test);
  estimate_background(loaded.scene, train);
  const auto result = dnmp::train_radiance(loaded.scene, train, test, cfg.radiance_train);
  io::write_loss_csv(result.history, out / "radiance_loss.csv");
  io::save_checkpoint(loaded.scene, io::to_json(cfg), out / kSceneFile);
  if (result.aborted) throw std::runtime_error("radiance training hit a non-finite loss; saved the last good parameters");
}

void render(const fs::path& checkpoint, const fs::path& scene_dir, const std::vector<std::size_t>& views,
            const std::optional<RadianceConfig>& preset, std::size_t chunk, const fs::path& out) {
  const auto loaded = io::load_checkpoint(checkpoint, preset);
  const auto cameras = io::load_cameras(scene_dir / "cameras.json");
  const auto which = views.empty() ? all_views(cameras.size()) : views;
  check_views(which, cameras.size());
  OutputLock lock(out);
  for (auto v : which) {
    const auto& cam = cameras[v];
    const auto r = render_image(loaded.scene, cam, {.parallel = true, .chunk = chunk});
    io::Image img(cam.width, cam.height);
    img.rgb = r.rgb;
    io::write_image(img, out / (io::view_name(v) + ".png"));
    io::DepthMap d{static_cast<std::uint32_t>(cam.width), static_cast<std::uint32_t>(cam.height), {}};
    d.values.assign(r.depth.begin(), r.depth.end());
    io::write_depth(d, out / (io::view_name(v) + "_depth.bin"));
  }
}

std::size_t edit(const fs::path& checkpoint, const EditRequest& request, const std::optional<RadianceConfig>& preset,
                 const fs::path& out) {
  auto loaded = io::load_checkpoint(checkpoint, preset);
  std::size_t count = 0;
  if (request.op == "remove") {
    OutputLock lock(out);
    count = remove_primitives(loaded.scene, request.region);
    io::save_checkpoint(loaded.scene, loaded.run_config, out / kSceneFile);
  } else if (request.op == "insert") {
    const auto donor = io::load_checkpoint(request.donor.value_or(checkpoint), preset);
    OutputLock lock(out);
    count = insert_primitives(loaded.scene, donor.scene, request.region, request.offset);
    io::save_checkpoint(loaded.scene, loaded.run_config, out / kSceneFile);
  } else if (request.op == "zero-features") {
    OutputLock lock(out);
    count = edit_features(loaded.scene, request.region, FeatureTransform::zero(loaded.scene.feature_dim()));
    io::save_checkpoint(loaded.scene, loaded.run_config, out / kSceneFile);
  } else {
    throw std::invalid_argument("unknown edit op '" + request.op + "' (expected remove, insert or zero-features)");
  }
  return count;
}

nlohmann::json eval(const fs::path& scene_dir, const fs::path& renders, const std::vector<std::size_t>& views,
                    const fs::path& out) {
  const auto cameras = io::load_cameras(scene_dir / "cameras.json");
  const auto which = views.empty() ? all_views(cameras.size()) : views;
  check_views(which, cameras.size());
  nlohmann::json report;
  report["views"] = nlohmann::json::array();
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (auto v : which) {
    const auto gt = io::read_image(scene_dir / "gt_rgb" / (io::view_name(v) + ".png"));
    const auto pred = io::read_image(renders / (io::view_name(v) + ".png"));
    const double p = io::psnr(pred, gt);
    const double s = io::ssim(pred, gt);
    psnr_sum += p;
    ssim_sum += s;
    nlohmann::json entry;
    entry["view"] = v;
    entry["psnr"] = std::isinf(p) ? nlohmann::json("inf") : nlohmann::json(p);
    entry["ssim"] = s;
    report["views"].push_back(entry);
  }
  const double n = static_cast<double>(which.size());
  report["mean_psnr"] = std::isinf(psnr_sum) ? nlohmann::json("inf") : nlohmann::json(psnr_sum / n);
  report["mean_ssim"] = ssim_sum / n;
  OutputLock lock(out);
  write_json(report, out / "eval.json");
  return report;
}

nlohmann::json bench(const fs::path& checkpoint, const fs::path& scene_dir, const std::optional<RadianceConfig>& preset,
                     std::size_t chunk, const fs::path& out) {
  const auto loaded = io::load_checkpoint(checkpoint, preset);
  const auto cameras = io::load_cameras(scene_dir / "cameras.json");
  for (std::size_t l = 0; l < loaded.scene.levels.size(); ++l) loaded.scene.bvh(l);
  auto time_ms = [&](bool parallel) {
    std::size_t pixels = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& cam : cameras) {
      render_image(loaded.scene, cam, {.parallel = parallel, .chunk = chunk});
      pixels += cam.pixel_count();
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return ms / (static_cast<double>(pixels) / 1000.0);
  };
  nlohmann::json report;
  report["preset"] = loaded.scene.radiance.config.preset;
  report["primitives"] = loaded.scene.total_primitives();
  report["ms_per_1k_pixels_parallel"] = time_ms(true);
  report["ms_per_1k_pixels_serial"] = time_ms(false);
  rusage ru{};
  getrusage(RUSAGE_SELF, &ru);
  report["peak_rss_mb"] = static_cast<double>(ru.ru_maxrss) / 1024.0;
  OutputLock lock(out);
  write_json(report, out / "bench.json");
  return report;
}

}  // namespace dnmp::pipeline
