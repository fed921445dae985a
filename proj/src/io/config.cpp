#include "dnmp/io/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace dnmp::io {

namespace {

// Reads optional keys of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw std::invalid_argument("config: '" + path_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw std::invalid_argument("config: unknown key '" + path_ + it.key() + "'");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw std::invalid_argument("config: '" + path_ + key + "' has the wrong type");
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  Section sub(const char* key) { return Section(j_.at(key), path_ + key + "."); }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string mode_name(ShapeMode m) { return m == ShapeMode::kLatent ? "latent" : "direct"; }

}  // namespace

void RunConfig::validate() const {
  if (template_level < 0 || template_level > 2) throw std::invalid_argument("config: template_level must be 0, 1 or 2");
  radiance.validate();
  scene.validate(radiance.feature_dim);
  if (codec.database_size == 0) throw std::invalid_argument("config: codec.database_size must be positive");
  if (codec.train.batch_size == 0 || codec.train.samples == 0) {
    throw std::invalid_argument("config: codec batch_size and samples must be positive");
  }
  if (!(codec.train.lr >= 0.0) || !(shape.lr >= 0.0) || !(radiance_train.lr >= 0.0)) {
    throw std::invalid_argument("config: learning rates must be >= 0");
  }
  if (radiance_train.batch == 0) throw std::invalid_argument("config: radiance_train.batch must be positive");
  if (render_chunk == 0) throw std::invalid_argument("config: render_chunk must be positive");
  if (depth_set.empty()) throw std::invalid_argument("config: depth_set must not be empty");
}

void RunConfig::apply_preset(const std::string& name) {
  RadianceConfig p = RadianceConfig::from_preset(name);
  p.feature_dim = radiance.feature_dim;
  p.feature_freq = radiance.feature_freq;
  p.view_freq = radiance.view_freq;
  p.encode_features = radiance.encode_features;
  p.encode_view = radiance.encode_view;
  radiance = p;
}

void RunConfig::apply_ablation(const std::string& name) {
  if (name == "direct-shape") {
    scene.shape_mode = ShapeMode::kDirect;
  } else if (name == "no-hierarchy") {
    scene.voxel_sizes.resize(1);
    scene.max_hits.resize(1);
  } else {
    throw std::invalid_argument("unknown ablation '" + name + "'");
  }
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["template_level"] = c.template_level;
  j["scene"] = {{"voxel_sizes", c.scene.voxel_sizes},
                {"max_hits", c.scene.max_hits},
                {"radius_scale", c.scene.radius_scale},
                {"feature_init_freq", c.scene.feature_init_freq},
                {"shape_mode", mode_name(c.scene.shape_mode)}};
  j["radiance"] = {{"preset", c.radiance.preset},
                   {"feature_dim", c.radiance.feature_dim},
                   {"feature_freq", c.radiance.feature_freq},
                   {"view_freq", c.radiance.view_freq},
                   {"encode_features", c.radiance.encode_features},
                   {"encode_view", c.radiance.encode_view},
                   {"trunk", c.radiance.trunk},
                   {"color", c.radiance.color}};
  j["codec"] = {{"database_size", c.codec.database_size},
                {"epochs", c.codec.train.epochs},
                {"lr", c.codec.train.lr},
                {"batch_size", c.codec.train.batch_size},
                {"samples", c.codec.train.samples},
                {"normal_weight", c.codec.train.regularizer.normal},
                {"laplacian_weight", c.codec.train.regularizer.laplacian},
                {"seed", c.codec.train.seed}};
  j["shape"] = {{"iterations", c.shape.iterations}, {"lr", c.shape.lr}, {"log_every", c.shape.log_every}};
  j["radiance_train"] = {{"iterations", c.radiance_train.iterations},
                         {"lr", c.radiance_train.lr},
                         {"batch", c.radiance_train.batch},
                         {"seed", c.radiance_train.seed},
                         {"log_every", c.radiance_train.log_every},
                         {"eval_every", c.radiance_train.eval_every}};
  j["render_chunk"] = c.render_chunk;
  j["held_out_views"] = c.held_out_views;
  j["depth_set"] = c.depth_set;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  {
    Section root(j, "");
    root.get("seed", c.seed);
    root.get("template_level", c.template_level);
    root.get("render_chunk", c.render_chunk);
    root.get("held_out_views", c.held_out_views);
    root.get("depth_set", c.depth_set);
    if (root.has("scene")) {
      Section s = root.sub("scene");
      s.get("voxel_sizes", c.scene.voxel_sizes);
      s.get("max_hits", c.scene.max_hits);
      s.get("radius_scale", c.scene.radius_scale);
      s.get("feature_init_freq", c.scene.feature_init_freq);
      std::string mode = mode_name(c.scene.shape_mode);
      s.get("shape_mode", mode);
      if (mode == "latent") {
        c.scene.shape_mode = ShapeMode::kLatent;
      } else if (mode == "direct") {
        c.scene.shape_mode = ShapeMode::kDirect;
      } else {
        throw std::invalid_argument("config: scene.shape_mode must be 'latent' or 'direct'");
      }
    }
    if (root.has("radiance")) {
      Section s = root.sub("radiance");
      std::string preset = c.radiance.preset;
      s.get("preset", preset);
      c.radiance = RadianceConfig::from_preset(preset);
      s.get("feature_dim", c.radiance.feature_dim);
      s.get("feature_freq", c.radiance.feature_freq);
      s.get("view_freq", c.radiance.view_freq);
      s.get("encode_features", c.radiance.encode_features);
      s.get("encode_view", c.radiance.encode_view);
      s.get("trunk", c.radiance.trunk);
      s.get("color", c.radiance.color);
    }
    if (root.has("codec")) {
      Section s = root.sub("codec");
      s.get("database_size", c.codec.database_size);
      s.get("epochs", c.codec.train.epochs);
      s.get("lr", c.codec.train.lr);
      s.get("batch_size", c.codec.train.batch_size);
      s.get("samples", c.codec.train.samples);
      s.get("normal_weight", c.codec.train.regularizer.normal);
      s.get("laplacian_weight", c.codec.train.regularizer.laplacian);
      s.get("seed", c.codec.train.seed);
    }
    if (root.has("shape")) {
      Section s = root.sub("shape");
      s.get("iterations", c.shape.iterations);
      s.get("lr", c.shape.lr);
      s.get("log_every", c.shape.log_every);
    }
    if (root.has("radiance_train")) {
      Section s = root.sub("radiance_train");
      s.get("iterations", c.radiance_train.iterations);
      s.get("lr", c.radiance_train.lr);
      s.get("batch", c.radiance_train.batch);
      s.get("seed", c.radiance_train.seed);
      s.get("log_every", c.radiance_train.log_every);
      s.get("eval_every", c.radiance_train.eval_every);
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << to_json(cfg).dump(2) << '\n';
}

}  // namespace dnmp::io
