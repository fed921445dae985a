#include "dnmp/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "dnmp/autodiff/adam.hpp"
#include "dnmp/autodiff/ops.hpp"
#include "dnmp/autodiff/tape.hpp"
#include "dnmp/random.hpp"

namespace dnmp {

VoxelGrid voxelize(const PointCloud& cloud, double size) {
  if (!(size > 0.0)) throw std::invalid_argument("voxel size must be positive");
  VoxelGrid grid;
  grid.voxel_size = size;
  const std::size_t n = cloud.size();
  if (n == 0) return grid;
  const auto& p = cloud.points.data();
  grid.occupied.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    VoxelKey k;
    for (int a = 0; a < 3; ++a) {
      const double v = p[3 * i + a];
      if (!std::isfinite(v)) throw std::invalid_argument("point cloud has a non-finite coordinate");
      k[a] = static_cast<std::int64_t>(std::floor(v / size));
    }
    grid.occupied.push_back(k);
  }
  std::sort(grid.occupied.begin(), grid.occupied.end());
  grid.occupied.erase(std::unique(grid.occupied.begin(), grid.occupied.end()), grid.occupied.end());
  return grid;
}

bool Region::contains(const Vec3& p) const { return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all(); }

Region Region::everything() {
  const double inf = std::numeric_limits<double>::infinity();
  return {Vec3::Constant(-inf), Vec3::Constant(inf)};
}

Vec3 SceneBounds::normalize(const Vec3& p) const {
  const Vec3 mid = 0.5 * (lo + hi);
  const double half = std::max(0.5 * (hi - lo).maxCoeff(), 1e-9);
  return (p - mid) / half;
}

void SceneConfig::validate(std::size_t feature_dim) const {
  if (voxel_sizes.empty()) throw std::invalid_argument("scene needs at least one hierarchy level");
  if (max_hits.size() != voxel_sizes.size()) {
    throw std::invalid_argument("need one intersection count per hierarchy level");
  }
  for (std::size_t i = 0; i < voxel_sizes.size(); ++i) {
    if (!(voxel_sizes[i] > 0.0)) throw std::invalid_argument("voxel sizes must be positive");
    if (i > 0 && !(voxel_sizes[i] > voxel_sizes[i - 1])) {
      throw std::invalid_argument("voxel sizes must be strictly increasing (finest first)");
    }
    if (max_hits[i] == 0) throw std::invalid_argument("intersection counts must be >= 1");
  }
  if (!(radius_scale > 0.0)) throw std::invalid_argument("radius scale must be positive");
  if (feature_init_freq < 0) throw std::invalid_argument("feature init frequency must be >= 0");
  if (encoded_dim(3, feature_init_freq) != feature_dim) {
    throw std::invalid_argument("feature init frequency " + std::to_string(feature_init_freq) + " gives dim " +
                                std::to_string(encoded_dim(3, feature_init_freq)) + ", configured feature dim is " +
                                std::to_string(feature_dim));
  }
}

std::size_t SceneModel::total_primitives() const {
  std::size_t n = 0;
  for (const auto& l : levels) n += l.primitive_count();
  return n;
}

ad::Tensor SceneModel::world_vertices(std::size_t level) const {
  const auto& lv = levels.at(level);
  const std::size_t p = lv.primitive_count();
  const std::size_t n = tmpl.mesh.vertex_count();
  if (p == 0) return ad::Tensor::zeros({0, 3});
  ad::Tensor local;
  if (config.shape_mode == ShapeMode::kLatent) {
    local = ad::reshape(decode_offsets(lv.latents, decoder), {p * n, 3});
  } else {
    local = lv.offsets;
  }
  std::vector<double> base(p * n * 3), radius(p * n), center(p * n * 3);
  const auto& t = tmpl.mesh.vertices.data();
  for (std::size_t i = 0; i < p; ++i) {
    const auto& rec = lv.records[i];
    for (std::size_t v = 0; v < n; ++v) {
      const std::size_t row = i * n + v;
      radius[row] = rec.radius;
      for (int a = 0; a < 3; ++a) {
        base[3 * row + a] = t[3 * v + a];
        center[3 * row + a] = rec.center[a];
      }
    }
  }
  local = ad::add(local, ad::Tensor({p * n, 3}, std::move(base)));
  return ad::add(ad::mul(local, ad::Tensor::column(std::move(radius))), ad::Tensor({p * n, 3}, std::move(center)));
}

std::uint64_t SceneModel::decoder_key() const {
  std::uint64_t k = 0;
  for (const auto& t : decoder.parameters()) k = mix64(k ^ mix64(reinterpret_cast<std::uintptr_t>(t.id())) ^ mix64(t.version() + 17));
  return k;
}

SceneModel::LevelCache& SceneModel::cache_for(std::size_t level) const {
  if (cache_.size() != levels.size()) cache_.resize(levels.size());
  return cache_.at(level);
}

void SceneModel::mark_dirty(std::size_t level) { ++cache_for(level).edit_generation; }

namespace {

std::uint64_t tensor_key(const ad::Tensor& t) { return t.defined() ? mix64(reinterpret_cast<std::uintptr_t>(t.id())) ^ t.version() : 0; }

// Area-weighted vertex normals per primitive; vertices without a usable
// face fall back to the direction from the primitive centre.
std::vector<Vec3> primitive_normals(const std::vector<Vec3>& verts, const std::vector<Face>& faces,
                                    const std::vector<PrimitiveRecord>& records, std::size_t n) {
  std::vector<Vec3> normals(verts.size(), Vec3::Zero());
  const std::size_t p = records.size();
  for (std::size_t i = 0; i < p; ++i) {
    const std::size_t base = i * n;
    for (const auto& f : faces) {
      const Vec3& a = verts[base + f[0]];
      const Vec3 c = (verts[base + f[1]] - a).cross(verts[base + f[2]] - a);
      if (0.5 * c.norm() <= kDegenerateArea) continue;
      for (auto v : f) normals[base + v] += c;
    }
    for (std::size_t v = 0; v < n; ++v) {
      Vec3& nv = normals[base + v];
      if (nv.norm() > 1e-300) {
        nv.normalize();
        continue;
      }
      nv = verts[base + v] - records[i].center;
      if (nv.norm() > 1e-300) {
        nv.normalize();
      } else {
        nv = Vec3::UnitZ();
      }
    }
  }
  return normals;
}

}  // namespace

std::shared_ptr<const LevelGeometry> SceneModel::geometry(std::size_t level) const {
  auto& c = cache_for(level);
  const auto& lv = levels.at(level);
  const std::uint64_t kl = tensor_key(lv.latents), ko = tensor_key(lv.offsets), kd = decoder_key();
  if (c.geometry && c.key_latent == kl && c.key_offsets == ko && c.key_decoder == kd &&
      c.key_edit == c.edit_generation) {
    return c.geometry;
  }
  auto g = std::make_shared<LevelGeometry>();
  const std::size_t p = lv.primitive_count();
  const std::size_t n = tmpl.mesh.vertex_count();
  if (p > 0) {
    ad::Tensor w;
    {
      ad::NoGradScope no_grad;
      w = world_vertices(level);
    }
    const auto& d = w.data();
    g->vertices.resize(p * n);
    for (std::size_t r = 0; r < p * n; ++r) g->vertices[r] = Vec3(d[3 * r], d[3 * r + 1], d[3 * r + 2]);
    const auto& faces = tmpl.mesh.faces();
    g->faces.reserve(p * faces.size());
    for (std::size_t i = 0; i < p; ++i) {
      const auto off = static_cast<std::uint32_t>(i * n);
      for (std::size_t f = 0; f < faces.size(); ++f) {
        g->faces.push_back({faces[f][0] + off, faces[f][1] + off, faces[f][2] + off});
        g->face_primitive.push_back(static_cast<std::uint32_t>(i));
        g->face_local.push_back(static_cast<std::uint32_t>(f));
      }
    }
    g->normals = primitive_normals(g->vertices, faces, lv.records, n);
  }
  c.geometry = g;
  c.bvh = std::make_shared<Bvh>(g);
  c.key_latent = kl;
  c.key_offsets = ko;
  c.key_decoder = kd;
  c.key_edit = c.edit_generation;
  return c.geometry;
}

const Bvh& SceneModel::bvh(std::size_t level) const {
  geometry(level);
  return *cache_for(level).bvh;
}

SceneModel SceneModel::clone() const {
  SceneModel s;
  s.tmpl = tmpl;  // topology is immutable and may be shared
  s.tmpl.mesh.vertices = tmpl.mesh.vertices.clone();
  s.decoder = decoder.clone();
  s.sphere_code = sphere_code.clone();
  s.radiance = radiance.clone();
  s.background = background.clone();
  s.bounds = bounds;
  s.config = config;
  s.levels.reserve(levels.size());
  for (const auto& l : levels) {
    HierarchyLevel c = l;
    c.latents = l.latents.clone();
    c.offsets = l.offsets.clone();
    c.features = l.features.clone();
    s.levels.push_back(std::move(c));
  }
  return s;
}

std::vector<ad::Tensor> SceneModel::shape_parameters(std::size_t level) const {
  const auto& lv = levels.at(level);
  return {config.shape_mode == ShapeMode::kLatent ? lv.latents : lv.offsets};
}

std::vector<ad::Tensor> SceneModel::radiance_parameters() const {
  std::vector<ad::Tensor> p;
  for (const auto& l : levels) {
    if (l.primitive_count() > 0) p.push_back(l.features);
  }
  for (const auto& t : radiance.parameters()) p.push_back(t);
  p.push_back(background);
  return p;
}

ad::Tensor find_sphere_code(const DecoderParams& dec, std::size_t iterations) {
  std::vector<double> e1(kLatentDim, 0.0);
  e1[0] = 1.0;
  ad::Tensor z({1, kLatentDim}, e1, true);
  auto objective = [&](const ad::Tensor& code) { return ad::sum(ad::square(decode_offsets(code, dec))); };
  double best;
  {
    ad::NoGradScope no_grad;
    best = objective(z).item();
  }
  ad::Tensor best_z = z.detach().clone();
  if (best <= 1e-24) return best_z;
  ad::Adam opt({z}, {.lr = 1e-2});
  for (std::size_t it = 0; it < iterations; ++it) {
    ad::Tape tape;
    double value;
    {
      ad::TapeScope scope(tape);
      const ad::Tensor loss = objective(z);
      value = loss.item();
      tape.backward(loss);
    }
    if (!std::isfinite(value)) break;
    if (value < best) {
      best = value;
      best_z = z.detach().clone();
    }
    opt.step();
    renormalize_rows(z);
  }
  {
    ad::NoGradScope no_grad;
    const double last = objective(z).item();
    if (last < best) best_z = z.detach().clone();
  }
  best_z.set_requires_grad(false);
  return best_z;
}

ad::Tensor init_vertex_features(const ad::Tensor& world_vertices, const SceneBounds& bounds, int freq,
                                std::size_t feature_dim) {
  if (encoded_dim(3, freq) != feature_dim) {
    throw std::invalid_argument("feature init frequency " + std::to_string(freq) + " does not give dim " +
                                std::to_string(feature_dim));
  }
  const std::size_t rows = world_vertices.rows();
  std::vector<double> out;
  out.reserve(rows * feature_dim);
  const auto& d = world_vertices.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Vec3 q = bounds.normalize(Vec3(d[3 * r], d[3 * r + 1], d[3 * r + 2]));
    const auto f = positional_encode(std::span<const double>(q.data(), 3), freq);
    out.insert(out.end(), f.begin(), f.end());
  }
  return ad::Tensor({rows, feature_dim}, std::move(out), true);
}

SceneModel init_scene(const PointCloud& cloud, const SceneConfig& cfg, const DecoderParams& dec,
                      const IcosphereTemplate& tmpl, const RadianceConfig& radiance, std::uint64_t seed) {
  cfg.validate(radiance.feature_dim);
  if (dec.vertex_count != tmpl.mesh.vertex_count()) {
    throw std::invalid_argument("decoder vertex count does not match the template");
  }
  SceneModel s;
  s.tmpl = tmpl;
  s.decoder = dec.clone();
  for (auto& t : s.decoder.parameters()) t.set_requires_grad(false);
  s.sphere_code = find_sphere_code(s.decoder);
  s.radiance = RadianceModel::create(radiance, derive_seed(seed, {0x7ad}));
  s.background = ad::Tensor::full({1, 3}, 0.5, true);
  s.config = cfg;
  if (cloud.size() > 0) {
    const auto& p = cloud.points.data();
    s.bounds.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    s.bounds.hi = -s.bounds.lo;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const Vec3 v(p[3 * i], p[3 * i + 1], p[3 * i + 2]);
      s.bounds.lo = s.bounds.lo.cwiseMin(v);
      s.bounds.hi = s.bounds.hi.cwiseMax(v);
    }
  }
  const std::size_t n = tmpl.mesh.vertex_count();
  std::size_t total = 0;
  for (std::size_t li = 0; li < cfg.voxel_sizes.size(); ++li) {
    const double size = cfg.voxel_sizes[li];
    const auto grid = voxelize(cloud, size);
    HierarchyLevel lv;
    lv.voxel_size = size;
    lv.max_hits = cfg.max_hits[li];
    const std::size_t count = grid.occupied.size();
    for (const auto& k : grid.occupied) {
      PrimitiveRecord r;
      r.voxel = k;
      r.center = Vec3((k[0] + 0.5) * size, (k[1] + 0.5) * size, (k[2] + 0.5) * size);
      r.radius = cfg.radius_scale * size;
      lv.records.push_back(r);
    }
    std::vector<double> z;
    z.reserve(count * kLatentDim);
    for (std::size_t i = 0; i < count; ++i) z.insert(z.end(), s.sphere_code.data().begin(), s.sphere_code.data().end());
    lv.latents = ad::Tensor({count, kLatentDim}, std::move(z), cfg.shape_mode == ShapeMode::kLatent);
    lv.offsets = ad::Tensor::zeros({count * n, 3}, cfg.shape_mode == ShapeMode::kDirect);
    s.levels.push_back(std::move(lv));
    total += count;
  }
  if (total == 0) throw std::invalid_argument("point cloud occupies no voxel at any level; nothing to build");
  for (std::size_t li = 0; li < s.levels.size(); ++li) {
    auto& lv = s.levels[li];
    if (lv.primitive_count() == 0) {
      lv.features = ad::Tensor::zeros({0, radiance.feature_dim}, true);
      continue;
    }
    ad::Tensor w;
    {
      ad::NoGradScope no_grad;
      w = s.world_vertices(li);
    }
    lv.features = init_vertex_features(w, s.bounds, cfg.feature_init_freq, radiance.feature_dim);
  }
  return s;
}

namespace {

bool record_before(const PrimitiveRecord& a, const PrimitiveRecord& b) {
  if (a.voxel != b.voxel) return a.voxel < b.voxel;
  for (int k = 0; k < 3; ++k) {
    if (a.center[k] != b.center[k]) return a.center[k] < b.center[k];
  }
  return a.radius < b.radius;
}

struct Source {
  const HierarchyLevel* level;
  std::size_t index;
  PrimitiveRecord record;
};

// Rebuilds a level from an ordered selection of primitives, sorted into the
// canonical (voxel, centre) order.
void rebuild_level(HierarchyLevel& lv, std::vector<Source> sources, std::size_t n, std::size_t c) {
  std::stable_sort(sources.begin(), sources.end(),
                   [](const Source& a, const Source& b) { return record_before(a.record, b.record); });
  const std::size_t p = sources.size();
  std::vector<PrimitiveRecord> records;
  std::vector<double> z, off, feat;
  records.reserve(p);
  z.reserve(p * kLatentDim);
  off.reserve(p * n * 3);
  feat.reserve(p * n * c);
  for (const auto& s : sources) {
    records.push_back(s.record);
    const auto& zl = s.level->latents.data();
    z.insert(z.end(), zl.begin() + s.index * kLatentDim, zl.begin() + (s.index + 1) * kLatentDim);
    const auto& ol = s.level->offsets.data();
    off.insert(off.end(), ol.begin() + s.index * n * 3, ol.begin() + (s.index + 1) * n * 3);
    const auto& fl = s.level->features.data();
    feat.insert(feat.end(), fl.begin() + s.index * n * c, fl.begin() + (s.index + 1) * n * c);
  }
  const bool rz = lv.latents.requires_grad(), ro = lv.offsets.requires_grad(), rf = lv.features.requires_grad();
  lv.records = std::move(records);
  lv.latents = ad::Tensor({p, kLatentDim}, std::move(z), rz);
  lv.offsets = ad::Tensor({p * n, 3}, std::move(off), ro);
  lv.features = ad::Tensor({p * n, c}, std::move(feat), rf);
}

}  // namespace

std::size_t remove_primitives(SceneModel& scene, const Region& region) {
  const std::size_t n = scene.tmpl.mesh.vertex_count(), c = scene.feature_dim();
  std::size_t removed = 0;
  for (std::size_t li = 0; li < scene.levels.size(); ++li) {
    auto& lv = scene.levels[li];
    std::vector<Source> keep;
    for (std::size_t i = 0; i < lv.primitive_count(); ++i) {
      if (region.contains(lv.records[i].center)) {
        ++removed;
      } else {
        keep.push_back({&lv, i, lv.records[i]});
      }
    }
    if (keep.size() == lv.primitive_count()) continue;
    HierarchyLevel snapshot = lv;
    for (auto& k : keep) k.level = &snapshot;
    rebuild_level(lv, std::move(keep), n, c);
    scene.mark_dirty(li);
  }
  return removed;
}

std::size_t insert_primitives(SceneModel& scene, const SceneModel& donor, const Region& region, const Vec3& offset) {
  const std::size_t n = scene.tmpl.mesh.vertex_count(), c = scene.feature_dim();
  if (donor.tmpl.mesh.vertex_count() != n || donor.tmpl.level != scene.tmpl.level) {
    throw std::invalid_argument("insert_primitives: donor uses a different template");
  }
  if (donor.feature_dim() != c) throw std::invalid_argument("insert_primitives: donor feature dim differs");
  if (donor.levels.size() > scene.levels.size()) {
    throw std::invalid_argument("insert_primitives: donor has more hierarchy levels than the scene");
  }
  std::size_t inserted = 0;
  for (std::size_t li = 0; li < donor.levels.size(); ++li) {
    const auto& dl = donor.levels[li];
    auto& lv = scene.levels[li];
    std::vector<Source> sources;
    HierarchyLevel snapshot = lv;
    for (std::size_t i = 0; i < lv.primitive_count(); ++i) sources.push_back({&snapshot, i, lv.records[i]});
    std::size_t added = 0;
    for (std::size_t i = 0; i < dl.primitive_count(); ++i) {
      if (!region.contains(dl.records[i].center)) continue;
      PrimitiveRecord r = dl.records[i];
      r.center += offset;
      for (int a = 0; a < 3; ++a) r.voxel[a] = static_cast<std::int64_t>(std::floor(r.center[a] / lv.voxel_size));
      sources.push_back({&dl, i, r});
      ++added;
    }
    if (added == 0) continue;
    rebuild_level(lv, std::move(sources), n, c);
    scene.mark_dirty(li);
    inserted += added;
  }
  return inserted;
}

FeatureTransform FeatureTransform::identity(std::size_t dim) {
  FeatureTransform t;
  t.matrix.assign(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) t.matrix[i * dim + i] = 1.0;
  t.bias.assign(dim, 0.0);
  return t;
}

FeatureTransform FeatureTransform::zero(std::size_t dim) {
  FeatureTransform t;
  t.matrix.assign(dim * dim, 0.0);
  t.bias.assign(dim, 0.0);
  return t;
}

std::size_t edit_features(SceneModel& scene, const Region& region, const FeatureTransform& transform) {
  const std::size_t c = scene.feature_dim();
  if (transform.matrix.size() != c * c || transform.bias.size() != c) {
    throw std::invalid_argument("edit_features: transform does not match the feature dim");
  }
  std::size_t edited = 0;
  std::vector<double> in(c);
  for (std::size_t li = 0; li < scene.levels.size(); ++li) {
    const auto geom = scene.geometry(li);
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < geom->vertices.size(); ++r) {
      if (region.contains(geom->vertices[r])) rows.push_back(r);
    }
    if (rows.empty()) continue;
    auto f = scene.levels[li].features.mutable_data();
    for (auto r : rows) {
      std::copy(f.begin() + r * c, f.begin() + (r + 1) * c, in.begin());
      for (std::size_t i = 0; i < c; ++i) {
        double acc = transform.bias[i];
        for (std::size_t j = 0; j < c; ++j) acc += transform.matrix[i * c + j] * in[j];
        f[r * c + i] = acc;
      }
    }
    edited += rows.size();
  }
  return edited;
}

}  // namespace dnmp
