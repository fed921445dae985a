#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dnmp/io/config.hpp"
#include "dnmp/pipeline.hpp"

namespace fs = std::filesystem;
using namespace dnmp;

namespace {

// Inputs that must exist; a missing one is a usage error.
struct MissingInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_path(const fs::path& p, const char* flag) {
  if (p.empty()) throw MissingInput(std::string("missing required option ") + flag);
  if (!fs::exists(p)) throw MissingInput(std::string(flag) + " " + p.string() + " does not exist");
}

std::vector<double> parse_numbers(const std::string& s, std::size_t count, const char* flag) {
  std::vector<double> v;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, ',');) v.push_back(std::stod(tok));
  if (v.size() != count) {
    throw std::invalid_argument(std::string(flag) + " expects " + std::to_string(count) + " comma-separated numbers");
  }
  return v;
}

std::string one_line(std::string s) {
  for (auto& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deformable neural mesh primitives: scene fitting and rendering"};
  app.require_subcommand(1);

  std::string config_path, preset, ablation;
  fs::path scene_dir, checkpoint, out, renders, donor;
  std::vector<std::size_t> views;
  std::uint64_t seed = 1;
  std::string scene_name = "quad", op, box, offset = "0,0,0";

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run config (JSON)");
    sub->add_option("--preset", preset, "radiance MLP preset")->check(CLI::IsMember({"full", "lightweight"}));
    sub->add_option("--ablation", ablation, "ablation switch")->check(CLI::IsMember({"direct-shape", "no-hierarchy"}));
    sub->add_option("--out", out, "output directory")->required();
  };

  auto* gen = app.add_subcommand("gen-scene", "write a synthetic scene directory");
  common(gen);
  gen->add_option("--scene", scene_name, "quad | room-corner | street-strip");
  gen->add_option("--seed", seed, "point-cloud and dropout seed");

  auto* codec = app.add_subcommand("train-codec", "pretrain the shape autoencoder");
  common(codec);

  auto* fit = app.add_subcommand("fit-shape", "build primitives and fit their shapes to depth");
  common(fit);
  fit->add_option("--scene-dir", scene_dir, "scene directory");
  fit->add_option("--checkpoint", checkpoint, "codec checkpoint");

  auto* rad = app.add_subcommand("train-radiance", "fit vertex features and the radiance MLP");
  common(rad);
  rad->add_option("--scene-dir", scene_dir, "scene directory");
  rad->add_option("--checkpoint", checkpoint, "scene checkpoint");

  auto* ren = app.add_subcommand("render", "render views of a scene checkpoint");
  common(ren);
  ren->add_option("--scene-dir", scene_dir, "scene directory (cameras)");
  ren->add_option("--checkpoint", checkpoint, "scene checkpoint");
  ren->add_option("--views", views, "view indices (default: all)")->delimiter(',');

  auto* ed = app.add_subcommand("edit", "remove, insert or recolour primitives");
  common(ed);
  ed->add_option("--checkpoint", checkpoint, "scene checkpoint");
  ed->add_option("--op", op, "remove | insert | zero-features")->required();
  ed->add_option("--box", box, "x0,y0,z0,x1,y1,z1")->required();
  ed->add_option("--offset", offset, "x,y,z (insert)");
  ed->add_option("--donor", donor, "donor scene checkpoint (insert)");

  auto* ev = app.add_subcommand("eval", "PSNR and SSIM of renders against ground truth");
  common(ev);
  ev->add_option("--scene-dir", scene_dir, "scene directory (ground truth)");
  ev->add_option("--renders", renders, "directory of rendered NNN.png");
  ev->add_option("--views", views, "view indices (default: held-out views of --config, else all)")->delimiter(',');

  auto* be = app.add_subcommand("bench", "time rendering and report peak memory");
  common(be);
  be->add_option("--scene-dir", scene_dir, "scene directory (cameras)");
  be->add_option("--checkpoint", checkpoint, "scene checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    io::RunConfig cfg;
    if (!config_path.empty()) {
      require_path(config_path, "--config");
      cfg = io::load_run_config(config_path);
    }
    if (!preset.empty()) cfg.apply_preset(preset);
    if (!ablation.empty()) cfg.apply_ablation(ablation);
    cfg.validate();
    std::optional<RadianceConfig> want;
    if (!preset.empty()) want = cfg.radiance;

    if (*gen) {
      pipeline::gen_scene(scene_name, seed, out);
    } else if (*codec) {
      pipeline::train_codec(cfg, out);
    } else if (*fit) {
      require_path(scene_dir, "--scene-dir");
      require_path(checkpoint, "--checkpoint");
      pipeline::fit_shape(cfg, scene_dir, checkpoint, out);
    } else if (*rad) {
      require_path(scene_dir, "--scene-dir");
      require_path(checkpoint, "--checkpoint");
      pipeline::train_radiance(cfg, scene_dir, checkpoint, out);
    } else if (*ren) {
      require_path(scene_dir, "--scene-dir");
      require_path(checkpoint, "--checkpoint");
      pipeline::render(checkpoint, scene_dir, views, want, cfg.render_chunk, out);
    } else if (*ed) {
      require_path(checkpoint, "--checkpoint");
      if (!donor.empty()) require_path(donor, "--donor");
      const auto b = parse_numbers(box, 6, "--box");
      const auto o = parse_numbers(offset, 3, "--offset");
      pipeline::EditRequest req;
      req.op = op;
      req.region = {Vec3(b[0], b[1], b[2]), Vec3(b[3], b[4], b[5])};
      req.offset = Vec3(o[0], o[1], o[2]);
      if (!donor.empty()) req.donor = donor;
      const auto n = pipeline::edit(checkpoint, req, want, out);
      std::cout << "edited " << n << '\n';
    } else if (*ev) {
      require_path(scene_dir, "--scene-dir");
      require_path(renders, "--renders");
      const auto which = views.empty() ? cfg.held_out_views : views;
      std::cout << pipeline::eval(scene_dir, renders, which, out).dump(2) << '\n';
    } else if (*be) {
      require_path(scene_dir, "--scene-dir");
      require_path(checkpoint, "--checkpoint");
      std::cout << pipeline::bench(checkpoint, scene_dir, want, cfg.render_chunk, out).dump(2) << '\n';
    }
  } catch (const MissingInput& e) {
    std::cerr << "dnmp: error: usage: " << one_line(e.what()) << '\n' << app.help() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "dnmp: error: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}
