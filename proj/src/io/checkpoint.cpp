#include "dnmp/io/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace dnmp::io {

namespace {

constexpr char kMagic[8] = {'D', 'N', 'M', 'P', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>(v >> (8 * i)));
  }
  void bytes(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  const std::vector<char>& data() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(std::vector<char> buf, std::string name) : buf_(std::move(buf)), name_(std::move(name)) {}
  std::uint64_t uint(int width) {
    need(width);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += width;
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == buf_.size(); }
  std::size_t remaining() const { return buf_.size() - pos_; }
  [[noreturn]] void fail(const std::string& what) const { throw std::runtime_error(name_ + ": " + what); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) fail("truncated checkpoint");
  }
  std::vector<char> buf_;
  std::string name_;
  std::size_t pos_ = 0;
};

void add_mlp(RecordFile& f, const std::string& prefix, const Mlp& m) {
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    f.records.emplace_back(prefix + "." + std::to_string(i) + ".weight", m.layers[i].weight);
    f.records.emplace_back(prefix + "." + std::to_string(i) + ".bias", m.layers[i].bias);
  }
}

// Copies records into an Mlp of known architecture, checking shapes.
void fill_mlp(const RecordFile& f, const std::string& prefix, Mlp& m, bool requires_grad) {
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    for (auto* t : {&m.layers[i].weight, &m.layers[i].bias}) {
      const std::string name = prefix + "." + std::to_string(i) + (t == &m.layers[i].weight ? ".weight" : ".bias");
      const auto& src = f.get(name);
      if (src.shape() != t->shape()) {
        throw std::runtime_error("checkpoint shape mismatch for '" + name + "': stored " + ad::to_string(src.shape()) +
                                 ", expected " + ad::to_string(t->shape()));
      }
      *t = ad::Tensor(src.shape(), std::vector<double>(src.data().begin(), src.data().end()), requires_grad);
    }
  }
}

ad::Tensor take(const RecordFile& f, const std::string& name, const ad::Shape& shape, bool requires_grad) {
  const auto& src = f.get(name);
  if (src.shape() != shape) {
    throw std::runtime_error("checkpoint shape mismatch for '" + name + "': stored " + ad::to_string(src.shape()) +
                             ", expected " + ad::to_string(shape));
  }
  return ad::Tensor(shape, std::vector<double>(src.data().begin(), src.data().end()), requires_grad);
}

nlohmann::json radiance_to_json(const RadianceConfig& c) {
  return {{"preset", c.preset},           {"feature_dim", c.feature_dim},   {"feature_freq", c.feature_freq},
          {"view_freq", c.view_freq},     {"encode_features", c.encode_features},
          {"encode_view", c.encode_view}, {"trunk", c.trunk},               {"color", c.color}};
}

RadianceConfig radiance_from_json(const nlohmann::json& j) {
  RadianceConfig c;
  c.preset = j.at("preset").get<std::string>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.feature_freq = j.at("feature_freq").get<int>();
  c.view_freq = j.at("view_freq").get<int>();
  c.encode_features = j.at("encode_features").get<bool>();
  c.encode_view = j.at("encode_view").get<bool>();
  c.trunk = j.at("trunk").get<std::vector<std::size_t>>();
  c.color = j.at("color").get<std::vector<std::size_t>>();
  return c;
}

}  // namespace

const ad::Tensor& RecordFile::get(const std::string& name) const {
  for (const auto& [n, t] : records) {
    if (n == name) return t;
  }
  throw std::runtime_error("checkpoint has no record '" + name + "'");
}

void write_record_file(const RecordFile& file, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  const std::string meta = file.meta.dump();
  w.u64(meta.size());
  w.bytes(meta.data(), meta.size());
  w.u32(static_cast<std::uint32_t>(file.records.size()));
  for (const auto& [name, t] : file.records) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u64(d);
    for (double v : t.data()) w.u64(std::bit_cast<std::uint64_t>(v));
  }
  // Write to a sibling file first so a failed write never leaves a partial checkpoint.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

RecordFile read_record_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}), path.string());
  if (r.str(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) r.fail("not a checkpoint (bad magic)");
  const auto version = r.uint(4);
  if (version != kCheckpointVersion) {
    r.fail("unsupported checkpoint version " + std::to_string(version) + " (expected " +
           std::to_string(kCheckpointVersion) + ")");
  }
  RecordFile f;
  const auto meta_len = r.uint(8);
  try {
    f.meta = nlohmann::json::parse(r.str(meta_len));
  } catch (const nlohmann::json::exception& e) {
    r.fail(std::string("bad config blob: ") + e.what());
  }
  const auto count = r.uint(4);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str(r.uint(4));
    const auto rank = r.uint(4);
    if (rank > 2) r.fail("record '" + name + "' has rank " + std::to_string(rank));
    ad::Shape shape;
    for (std::uint64_t k = 0; k < rank; ++k) shape.push_back(r.uint(8));
    const std::size_t n = ad::numel(shape);
    if (n > r.remaining() / 8) r.fail("truncated checkpoint");
    std::vector<double> data(n);
    for (auto& v : data) v = std::bit_cast<double>(r.uint(8));
    f.records.emplace_back(std::move(name), ad::Tensor(shape, std::move(data)));
  }
  if (!r.at_end()) r.fail("trailing bytes after the last record");
  return f;
}

void save_codec(const Codec& codec, const std::filesystem::path& path) {
  RecordFile f;
  f.meta = {{"kind", "codec"}, {"template_level", codec.template_level}, {"vertex_count", codec.decoder.vertex_count}};
  add_mlp(f, "encoder.point", codec.encoder.point_mlp);
  add_mlp(f, "encoder.head", codec.encoder.head);
  add_mlp(f, "decoder", codec.decoder.mlp);
  write_record_file(f, path);
}

Codec load_codec(const std::filesystem::path& path) {
  const RecordFile f = read_record_file(path);
  if (f.meta.value("kind", "") != "codec") throw std::runtime_error(path.string() + ": not a codec checkpoint");
  Codec c;
  c.template_level = f.meta.at("template_level").get<int>();
  const auto n = f.meta.at("vertex_count").get<std::size_t>();
  c.encoder = EncoderParams::create(0);
  c.decoder = DecoderParams::create(n, 0);
  fill_mlp(f, "encoder.point", c.encoder.point_mlp, true);
  fill_mlp(f, "encoder.head", c.encoder.head, true);
  fill_mlp(f, "decoder", c.decoder.mlp, true);
  return c;
}

void save_checkpoint(const SceneModel& scene, const nlohmann::json& run_config, const std::filesystem::path& path) {
  RecordFile f;
  nlohmann::json levels = nlohmann::json::array();
  for (const auto& lv : scene.levels) {
    nlohmann::json voxels = nlohmann::json::array();
    for (const auto& r : lv.records) voxels.push_back(r.voxel);
    levels.push_back({{"voxel_size", lv.voxel_size}, {"max_hits", lv.max_hits}, {"voxels", voxels}});
  }
  f.meta = {{"kind", "scene"},
            {"template_level", scene.tmpl.level},
            {"vertex_count", scene.decoder.vertex_count},
            {"shape_mode", scene.config.shape_mode == ShapeMode::kLatent ? "latent" : "direct"},
            {"radius_scale", scene.config.radius_scale},
            {"feature_init_freq", scene.config.feature_init_freq},
            {"voxel_sizes", scene.config.voxel_sizes},
            {"max_hits", scene.config.max_hits},
            {"radiance", radiance_to_json(scene.radiance.config)},
            {"levels", levels},
            {"run_config", run_config}};
  add_mlp(f, "decoder", scene.decoder.mlp);
  f.records.emplace_back("sphere_code", scene.sphere_code);
  add_mlp(f, "radiance.trunk", scene.radiance.trunk);
  add_mlp(f, "radiance.opacity", scene.radiance.opacity);
  add_mlp(f, "radiance.color", scene.radiance.color);
  f.records.emplace_back("background", scene.background);
  std::vector<double> bounds{scene.bounds.lo.x(), scene.bounds.lo.y(), scene.bounds.lo.z(),
                             scene.bounds.hi.x(), scene.bounds.hi.y(), scene.bounds.hi.z()};
  f.records.emplace_back("bounds", ad::Tensor({2, 3}, bounds));
  for (std::size_t l = 0; l < scene.levels.size(); ++l) {
    const auto& lv = scene.levels[l];
    const std::string p = "level" + std::to_string(l) + ".";
    std::vector<double> centers, radii;
    for (const auto& r : lv.records) {
      centers.insert(centers.end(), {r.center.x(), r.center.y(), r.center.z()});
      radii.push_back(r.radius);
    }
    f.records.emplace_back(p + "centers", ad::Tensor({lv.primitive_count(), 3}, centers));
    f.records.emplace_back(p + "radii", ad::Tensor({lv.primitive_count(), 1}, radii));
    f.records.emplace_back(p + "latents", lv.latents);
    f.records.emplace_back(p + "offsets", lv.offsets);
    f.records.emplace_back(p + "features", lv.features);
  }
  write_record_file(f, path);
}

LoadedScene load_checkpoint(const std::filesystem::path& path, const std::optional<RadianceConfig>& expected) {
  const RecordFile f = read_record_file(path);
  const auto& m = f.meta;
  if (m.value("kind", "") != "scene") throw std::runtime_error(path.string() + ": not a scene checkpoint");
  try {
    LoadedScene out;
    SceneModel& s = out.scene;
    out.run_config = m.at("run_config");
    s.tmpl = build_icosphere(m.at("template_level").get<int>());
    const auto n = m.at("vertex_count").get<std::size_t>();
    if (n != s.tmpl.mesh.vertex_count()) throw std::runtime_error("vertex count does not match the template level");
    s.config.shape_mode = m.at("shape_mode").get<std::string>() == "latent" ? ShapeMode::kLatent : ShapeMode::kDirect;
    s.config.radius_scale = m.at("radius_scale").get<double>();
    s.config.feature_init_freq = m.at("feature_init_freq").get<int>();
    s.config.voxel_sizes = m.at("voxel_sizes").get<std::vector<double>>();
    s.config.max_hits = m.at("max_hits").get<std::vector<std::size_t>>();
    const RadianceConfig stored = radiance_from_json(m.at("radiance"));
    const RadianceConfig& want = expected ? *expected : stored;
    s.decoder = DecoderParams::create(n, 0);
    fill_mlp(f, "decoder", s.decoder.mlp, false);
    s.sphere_code = take(f, "sphere_code", {1, kLatentDim}, false);
    s.radiance = RadianceModel::create(want, 0);
    fill_mlp(f, "radiance.trunk", s.radiance.trunk, true);
    fill_mlp(f, "radiance.opacity", s.radiance.opacity, true);
    fill_mlp(f, "radiance.color", s.radiance.color, true);
    s.background = take(f, "background", {1, 3}, true);
    const ad::Tensor bt = take(f, "bounds", {2, 3}, false);
    const auto& b = bt.data();
    s.bounds.lo = Vec3(b[0], b[1], b[2]);
    s.bounds.hi = Vec3(b[3], b[4], b[5]);
    const auto& levels = m.at("levels");
    const std::size_t c = want.feature_dim;
    for (std::size_t l = 0; l < levels.size(); ++l) {
      HierarchyLevel lv;
      lv.voxel_size = levels[l].at("voxel_size").get<double>();
      lv.max_hits = levels[l].at("max_hits").get<std::size_t>();
      const auto voxels = levels[l].at("voxels").get<std::vector<VoxelKey>>();
      const std::size_t p = voxels.size();
      const std::string pre = "level" + std::to_string(l) + ".";
      const auto centers = take(f, pre + "centers", {p, 3}, false);
      const auto radii = take(f, pre + "radii", {p, 1}, false);
      for (std::size_t i = 0; i < p; ++i) {
        PrimitiveRecord r;
        r.voxel = voxels[i];
        r.center = Vec3(centers.data()[3 * i], centers.data()[3 * i + 1], centers.data()[3 * i + 2]);
        r.radius = radii.data()[i];
        lv.records.push_back(r);
      }
      lv.latents = take(f, pre + "latents", {p, kLatentDim}, s.config.shape_mode == ShapeMode::kLatent);
      lv.offsets = take(f, pre + "offsets", {p * n, 3}, s.config.shape_mode == ShapeMode::kDirect);
      lv.features = take(f, pre + "features", {p * n, c}, true);
      s.levels.push_back(std::move(lv));
    }
    if (s.levels.size() != s.config.voxel_sizes.size()) throw std::runtime_error("level count does not match the config");
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": bad checkpoint metadata: " + e.what());
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    if (what.rfind(path.string(), 0) == 0) throw;
    throw std::runtime_error(path.string() + ": " + what);
  }
}

}  // namespace dnmp::io
