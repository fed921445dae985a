#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dnmp/io/config.hpp"
#include "dnmp/scene.hpp"

// The stages behind each CLI subcommand. Every stage reads its inputs from
// files and writes its results into an output directory.
namespace dnmp::pipeline {

namespace fs = std::filesystem;

// Exclusive lock on an output directory, released on destruction.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

inline constexpr const char* kCodecFile = "codec.bin";
inline constexpr const char* kSceneFile = "scene.ckpt";

void gen_scene(const std::string& name, std::uint64_t seed, const fs::path& out);

// out/codec.bin, out/codec_loss.csv
void train_codec(const io::RunConfig& cfg, const fs::path& out);

// out/scene.ckpt, out/shape_loss.csv
void fit_shape(const io::RunConfig& cfg, const fs::path& scene_dir, const fs::path& codec, const fs::path& out);

// out/scene.ckpt, out/radiance_loss.csv
void train_radiance(const io::RunConfig& cfg, const fs::path& scene_dir, const fs::path& checkpoint,
                    const fs::path& out);

// out/NNN.png and out/NNN_depth.bin for each view (all views when empty).
void render(const fs::path& checkpoint, const fs::path& scene_dir, const std::vector<std::size_t>& views,
            const std::optional<RadianceConfig>& preset, std::size_t chunk, const fs::path& out);

struct EditRequest {
  std::string op;  // remove | insert | zero-features
  Region region;
  Vec3 offset = Vec3::Zero();
  std::optional<fs::path> donor;  // insert only; defaults to the edited checkpoint
};

// out/scene.ckpt; returns the number of primitives or vertices affected.
std::size_t edit(const fs::path& checkpoint, const EditRequest& request, const std::optional<RadianceConfig>& preset,
                 const fs::path& out);

// Compares renders/NNN.png against scene_dir/gt_rgb/NNN.png; writes out/eval.json.
nlohmann::json eval(const fs::path& scene_dir, const fs::path& renders, const std::vector<std::size_t>& views,
                    const fs::path& out);

// Times parallel and serial rendering of every view; writes out/bench.json.
nlohmann::json bench(const fs::path& checkpoint, const fs::path& scene_dir, const std::optional<RadianceConfig>& preset,
                     std::size_t chunk, const fs::path& out);

}  // namespace dnmp::pipeline
