#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dnmp/autodiff/tensor.hpp"
#include "dnmp/scene.hpp"
#include "dnmp/shape_codec.hpp"

namespace dnmp::io {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Container: 8-byte magic, u32 version, u64 length + JSON blob, u32 record
// count, then per record: u32 name length, name, u32 rank, u64 dims,
// float64 values. All integers little-endian.
struct RecordFile {
  nlohmann::json meta;
  std::vector<std::pair<std::string, ad::Tensor>> records;

  const ad::Tensor& get(const std::string& name) const;
};

void write_record_file(const RecordFile& file, const std::filesystem::path& path);
RecordFile read_record_file(const std::filesystem::path& path);

struct Codec {
  int template_level = 2;
  EncoderParams encoder;
  DecoderParams decoder;
};

void save_codec(const Codec& codec, const std::filesystem::path& path);
Codec load_codec(const std::filesystem::path& path);

// The run config is stored alongside the scene for reference.
void save_checkpoint(const SceneModel& scene, const nlohmann::json& run_config, const std::filesystem::path& path);

struct LoadedScene {
  SceneModel scene;
  nlohmann::json run_config;
};

// When expected is set, every radiance parameter must have the shape a
// model built from it would have.
LoadedScene load_checkpoint(const std::filesystem::path& path,
                            const std::optional<RadianceConfig>& expected = std::nullopt);

}  // namespace dnmp::io
