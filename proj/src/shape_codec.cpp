#include "dnmp/shape_codec.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

#include "dnmp/autodiff/adam.hpp"
#include "dnmp/autodiff/ops.hpp"
#include "dnmp/autodiff/tape.hpp"
#include "dnmp/random.hpp"

namespace dnmp {

EncoderParams EncoderParams::create(std::uint64_t seed) {
  EncoderParams e;
  e.point_mlp = Mlp({3, 64, 128}, derive_seed(seed, {1}));
  e.head = Mlp({128, kLatentDim}, derive_seed(seed, {2}));
  return e;
}

std::vector<ad::Tensor> EncoderParams::parameters() const {
  auto p = point_mlp.parameters();
  auto h = head.parameters();
  p.insert(p.end(), h.begin(), h.end());
  return p;
}

DecoderParams DecoderParams::create(std::size_t vertex_count, std::uint64_t seed) {
  DecoderParams d;
  d.vertex_count = vertex_count;
  d.mlp = Mlp({kLatentDim, 128, 256, vertex_count * 3}, derive_seed(seed, {3}));
  d.mlp.zero_last_layer();
  return d;
}

std::vector<ad::Tensor> DecoderParams::parameters() const { return mlp.parameters(); }

DecoderParams DecoderParams::clone() const { return {mlp.clone(), vertex_count}; }

void renormalize_rows(ad::Tensor& z) {
  const std::size_t R = z.rows(), C = z.cols();
  auto d = z.mutable_data();
  for (std::size_t r = 0; r < R; ++r) {
    double n2 = 0.0;
    for (std::size_t c = 0; c < C; ++c) n2 += d[r * C + c] * d[r * C + c];
    const double n = std::sqrt(n2);
    if (!(n > 0.0)) throw std::domain_error("cannot project a zero latent code onto the unit sphere");
    for (std::size_t c = 0; c < C; ++c) d[r * C + c] /= n;
  }
}

double max_unit_norm_error(const ad::Tensor& z) {
  const std::size_t R = z.rows(), C = z.cols();
  const auto d = z.data();
  double worst = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    double n2 = 0.0;
    for (std::size_t c = 0; c < C; ++c) n2 += d[r * C + c] * d[r * C + c];
    worst = std::max(worst, std::abs(std::sqrt(n2) - 1.0));
  }
  return worst;
}

ad::Tensor decode_offsets(const ad::Tensor& z, const DecoderParams& dec) {
  if (z.rank() != 2 || z.cols() != kLatentDim) {
    throw std::invalid_argument("latent codes must be B x " + std::to_string(kLatentDim));
  }
  return dec.mlp.forward(z);
}

TriangleMesh decode_latent(const ad::Tensor& z, const DecoderParams& dec, const IcosphereTemplate& tmpl) {
  if (z.numel() != kLatentDim) throw std::invalid_argument("decode_latent expects one 8-dim code");
  if (dec.vertex_count != tmpl.mesh.vertex_count()) {
    throw std::invalid_argument("decoder vertex count does not match the template");
  }
  const ad::Tensor code = z.rank() == 2 ? z : ad::reshape(z, {1, kLatentDim});
  if (max_unit_norm_error(code) > kUnitNormTolerance) {
    throw std::invalid_argument("decode_latent: latent code is not unit length");
  }
  const auto offsets = ad::reshape(decode_offsets(code, dec), {dec.vertex_count, 3});
  return {ad::add(tmpl.mesh.vertices, offsets), tmpl.mesh.topology};
}

ad::Tensor encode_patch(const ad::Tensor& points, const EncoderParams& enc) {
  if (points.rank() != 2 || points.cols() != 3) throw std::invalid_argument("encode_patch: points must be k x 3");
  if (points.rows() == 0) throw std::invalid_argument("encode_patch: empty point set");
  const auto features = enc.point_mlp.forward(points, /*relu_last=*/true);
  const std::size_t k = features.rows(), C = features.cols();
  const auto fd = features.data();
  std::vector<std::size_t> argmax(C);
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t best = 0;
    for (std::size_t r = 1; r < k; ++r) {
      if (fd[r * C + c] > fd[best * C + c]) best = r;
    }
    argmax[c] = best * C + c;
  }
  const auto pooled = ad::gather(features, argmax, {1, C});
  return ad::normalize_rows(enc.head.forward(pooled));
}

std::string_view family_name(PatchFamily f) {
  switch (f) {
    case PatchFamily::kPlane: return "plane";
    case PatchFamily::kDihedral: return "dihedral";
    case PatchFamily::kCylinder: return "cylinder";
    case PatchFamily::kSphereCap: return "sphere_cap";
    case PatchFamily::kSaddle: return "saddle";
  }
  return "unknown";
}

namespace {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

Mat3 random_rotation(std::mt19937_64& rng) {
  // Uniform unit quaternion (Shoemake).
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double u1 = u(rng), u2 = u(rng), u3 = u(rng);
  const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
  const double w = a * std::sin(2 * std::numbers::pi * u2), x = a * std::cos(2 * std::numbers::pi * u2);
  const double y = b * std::sin(2 * std::numbers::pi * u3), z = b * std::cos(2 * std::numbers::pi * u3);
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
           {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
           {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
}

constexpr int kPatchGrid = 17;
constexpr std::size_t kMinPatchFaces = 16;

// Height field h(x, y) over [-1, 1]^2 in the local frame; NaN drops a vertex.
template <typename Height>
std::optional<TriangleMesh> height_field_patch(Height h, double offset, const Mat3& rot) {
  std::vector<Vec3> pts;
  std::vector<int> keep(kPatchGrid * kPatchGrid, -1);
  std::vector<double> flat;
  int kept = 0;
  for (int j = 0; j < kPatchGrid; ++j) {
    for (int i = 0; i < kPatchGrid; ++i) {
      const double x = -1.0 + 2.0 * i / (kPatchGrid - 1);
      const double y = -1.0 + 2.0 * j / (kPatchGrid - 1);
      const double z = h(x, y);
      if (!std::isfinite(z)) continue;
      const Vec3 local{x, y, z + offset};
      Vec3 p{};
      for (int r = 0; r < 3; ++r) p[r] = rot[r][0] * local[0] + rot[r][1] * local[1] + rot[r][2] * local[2];
      if (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] > 1.0) continue;
      keep[j * kPatchGrid + i] = kept++;
      flat.insert(flat.end(), p.begin(), p.end());
    }
  }
  std::vector<Face> faces;
  std::vector<int> used(static_cast<std::size_t>(kept), 0);
  auto add = [&](int a, int b, int c) {
    if (a < 0 || b < 0 || c < 0) return;
    faces.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(c)});
    used[a] = used[b] = used[c] = 1;
  };
  for (int j = 0; j + 1 < kPatchGrid; ++j) {
    for (int i = 0; i + 1 < kPatchGrid; ++i) {
      const int v00 = keep[j * kPatchGrid + i], v10 = keep[j * kPatchGrid + i + 1];
      const int v01 = keep[(j + 1) * kPatchGrid + i], v11 = keep[(j + 1) * kPatchGrid + i + 1];
      add(v00, v10, v11);
      add(v00, v11, v01);
    }
  }
  if (faces.size() < kMinPatchFaces) return std::nullopt;
  // Drop vertices no face references.
  std::vector<std::uint32_t> remap(static_cast<std::size_t>(kept));
  std::vector<double> compact;
  std::uint32_t next = 0;
  for (int v = 0; v < kept; ++v) {
    if (!used[v]) continue;
    remap[v] = next++;
    compact.insert(compact.end(), flat.begin() + v * 3, flat.begin() + v * 3 + 3);
  }
  for (auto& f : faces) {
    for (auto& v : f) v = remap[v];
  }
  return make_mesh(std::move(compact), std::move(faces));
}

}  // namespace

TriangleMesh generate_patch(PatchFamily family, std::uint64_t seed) {
  std::mt19937_64 rng(mix64(seed));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int attempt = 0; attempt < 64; ++attempt) {
    const Mat3 rot = random_rotation(rng);
    const double offset = uniform(-0.6, 0.6);
    std::optional<TriangleMesh> mesh;
    switch (family) {
      case PatchFamily::kPlane:
        mesh = height_field_patch([](double, double) { return 0.0; }, offset, rot);
        break;
      case PatchFamily::kDihedral: {
        const double slope = uniform(0.3, 1.7);
        mesh = height_field_patch([slope](double x, double) { return slope * std::abs(x); }, offset, rot);
        break;
      }
      case PatchFamily::kCylinder: {
        const double radius = uniform(0.5, 1.5);
        mesh = height_field_patch(
            [radius, nan](double x, double) {
              return std::abs(x) < 0.98 * radius ? radius - std::sqrt(radius * radius - x * x) : nan;
            },
            offset, rot);
        break;
      }
      case PatchFamily::kSphereCap: {
        const double radius = uniform(0.6, 1.5);
        mesh = height_field_patch(
            [radius, nan](double x, double y) {
              const double r2 = x * x + y * y;
              return r2 < 0.96 * radius * radius ? radius - std::sqrt(radius * radius - r2) : nan;
            },
            offset, rot);
        break;
      }
      case PatchFamily::kSaddle: {
        const double curvature = uniform(0.3, 1.0);
        mesh = height_field_patch([curvature](double x, double y) { return curvature * (x * x - y * y); }, offset,
                                  rot);
        break;
      }
    }
    if (mesh) return std::move(*mesh);
  }
  throw std::runtime_error("could not generate a patch inside the unit ball");
}

PatchDatabase generate_patch_database(std::size_t n, std::uint64_t seed) {
  PatchDatabase db;
  db.entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto entry_seed = derive_seed(seed, {i});
    std::mt19937_64 pick(entry_seed);
    const auto family = static_cast<PatchFamily>(pick() % kPatchFamilyCount);
    db.entries.push_back({family, entry_seed, generate_patch(family, entry_seed)});
  }
  return db;
}

PatchDatabase generate_patch_database(std::size_t n, std::uint64_t seed, PatchFamily only) {
  PatchDatabase db;
  db.entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto entry_seed = derive_seed(seed, {i});
    db.entries.push_back({only, entry_seed, generate_patch(only, entry_seed)});
  }
  return db;
}

std::uint64_t autoencoder_sample_seed(std::uint64_t base, std::size_t epoch, std::size_t entry, int which) {
  return derive_seed(base, {epoch, entry, static_cast<std::uint64_t>(which)});
}

namespace {

struct EntryLoss {
  ad::Tensor total;
  ad::Tensor chamfer;
};

EntryLoss entry_loss(const PatchEntry& entry, const EncoderParams& enc, const DecoderParams& dec,
                     const IcosphereTemplate& tmpl, const AutoencoderConfig& cfg, std::size_t epoch,
                     std::size_t index) {
  ad::Tensor target;
  {
    ad::NoGradScope no_grad;
    target = sample_surface(entry.mesh, cfg.samples, autoencoder_sample_seed(cfg.seed, epoch, index, 0));
  }
  const auto z = encode_patch(target, enc);
  const auto offsets = ad::reshape(decode_offsets(z, dec), {dec.vertex_count, 3});
  const TriangleMesh decoded{ad::add(tmpl.mesh.vertices, offsets), tmpl.mesh.topology};
  const auto points = sample_surface(decoded, cfg.samples, autoencoder_sample_seed(cfg.seed, epoch, index, 1));
  const auto chamfer = chamfer_distance(points, target);
  return {ad::add(chamfer, regularization_loss(decoded, cfg.regularizer)), chamfer};
}

std::vector<std::vector<double>> snapshot(const std::vector<ad::Tensor>& params) {
  std::vector<std::vector<double>> s;
  for (const auto& p : params) s.emplace_back(p.data().begin(), p.data().end());
  return s;
}

void restore(std::vector<ad::Tensor>& params, const std::vector<std::vector<double>>& s) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto d = params[i].mutable_data();
    std::copy(s[i].begin(), s[i].end(), d.begin());
    params[i].zero_grad();
  }
}

}  // namespace

AutoencoderEval evaluate_autoencoder(const PatchDatabase& db, const EncoderParams& enc, const DecoderParams& dec,
                                     const IcosphereTemplate& tmpl, const AutoencoderConfig& cfg) {
  if (db.entries.empty()) throw std::invalid_argument("empty patch database");
  ad::NoGradScope no_grad;
  AutoencoderEval ev;
  for (std::size_t i = 0; i < db.entries.size(); ++i) {
    const auto l = entry_loss(db.entries[i], enc, dec, tmpl, cfg, 0, i);
    ev.loss += l.total.item();
    ev.chamfer += l.chamfer.item();
  }
  ev.loss /= static_cast<double>(db.entries.size());
  ev.chamfer /= static_cast<double>(db.entries.size());
  return ev;
}

AutoencoderHistory train_autoencoder(const PatchDatabase& db, EncoderParams& enc, DecoderParams& dec,
                                     const IcosphereTemplate& tmpl, const AutoencoderConfig& cfg) {
  if (db.entries.empty()) throw std::invalid_argument("empty patch database");
  if (cfg.batch_size == 0 || cfg.samples == 0) throw std::invalid_argument("batch size and samples must be >= 1");
  if (dec.vertex_count != tmpl.mesh.vertex_count()) {
    throw std::invalid_argument("decoder vertex count does not match the template");
  }
  auto params = enc.parameters();
  for (const auto& p : dec.parameters()) params.push_back(p);
  for (auto& p : params) {
    if (!p.requires_grad()) p.set_requires_grad(true);
    p.zero_grad();
  }
  ad::Adam adam(params, {.lr = cfg.lr});

  AutoencoderHistory history;
  const auto initial = evaluate_autoencoder(db, enc, dec, tmpl, cfg);
  history.loss.push_back(initial.loss);
  history.chamfer.push_back(initial.chamfer);

  const std::size_t n = db.entries.size();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto good = snapshot(params);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, {epoch, 0xa11ce}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0, chamfer_sum = 0.0;
    bool finite = true;
    for (std::size_t start = 0; start < n && finite; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      std::vector<std::unique_ptr<ad::Tape>> tapes(count);
      std::vector<double> losses(count), chamfers(count);
      const double weight = 1.0 / static_cast<double>(count);
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(count); ++b) {
        tapes[b] = std::make_unique<ad::Tape>();
        ad::TapeScope scope(*tapes[b]);
        const std::size_t idx = order[start + static_cast<std::size_t>(b)];
        const auto l = entry_loss(db.entries[idx], enc, dec, tmpl, cfg, epoch, idx);
        losses[b] = l.total.item();
        chamfers[b] = l.chamfer.item();
        tapes[b]->backward(ad::scale(l.total, weight), /*accumulate=*/false);
      }
      for (std::size_t b = 0; b < count; ++b) {
        if (!std::isfinite(losses[b])) finite = false;
        loss_sum += losses[b];
        chamfer_sum += chamfers[b];
      }
      if (!finite) break;
      for (auto& t : tapes) t->accumulate_leaf_grads();
      adam.step();
    }
    if (!finite) {
      restore(params, good);
      history.diverged = true;
      break;
    }
    history.loss.push_back(loss_sum / static_cast<double>(n));
    history.chamfer.push_back(chamfer_sum / static_cast<double>(n));
  }
  return history;
}

}  // namespace dnmp
