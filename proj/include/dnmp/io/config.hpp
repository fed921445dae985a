#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "dnmp/radiance.hpp"
#include "dnmp/scene.hpp"
#include "dnmp/shape_codec.hpp"
#include "dnmp/train.hpp"

namespace dnmp::io {

struct CodecRunConfig {
  std::size_t database_size = 500;
  AutoencoderConfig train{};
};

// Declarative description of a whole run. Unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 1;
  int template_level = 2;
  SceneConfig scene{};
  RadianceConfig radiance = RadianceConfig::full();
  CodecRunConfig codec{};
  ShapeFitConfig shape{};
  RadianceTrainConfig radiance_train{};
  std::size_t render_chunk = 1024;
  // Views excluded from training and used for evaluation.
  std::vector<std::size_t> held_out_views{};
  // Depth directory inside the scene directory used for shape fitting.
  std::string depth_set = "gt_depth";

  void validate() const;
  void apply_preset(const std::string& name);
  // "direct-shape" or "no-hierarchy".
  void apply_ablation(const std::string& name);
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace dnmp::io
