#include "dnmp/radiance.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dnmp/autodiff/ops.hpp"
#include "dnmp/random.hpp"

namespace dnmp {

ad::Tensor positional_encode(const ad::Tensor& x, int freq) {
  if (freq < 0) throw std::invalid_argument("positional encoding frequency must be >= 0");
  if (x.rank() != 2) throw std::invalid_argument("positional_encode expects a B x k tensor");
  if (freq == 0) return x;
  const std::size_t k = x.cols();
  const auto f = static_cast<std::size_t>(freq);
  // arg[:, i*f + l] = 2^l pi x[:, i]
  std::vector<double> w(k * k * f, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t l = 0; l < f; ++l) w[i * (k * f) + i * f + l] = std::ldexp(std::numbers::pi, static_cast<int>(l));
  }
  const ad::Tensor arg = ad::matmul(x, ad::Tensor({k, k * f}, std::move(w)));
  const ad::Tensor parts[] = {x, ad::sin(arg), ad::cos(arg)};
  const ad::Tensor all = ad::concat(parts, 1);
  // Column layout of `all`: x block [0, k), sin block [k, k + kf), cos block after.
  std::vector<std::size_t> perm;
  perm.reserve(encoded_dim(k, freq));
  for (std::size_t i = 0; i < k; ++i) {
    perm.push_back(i);
    for (std::size_t l = 0; l < f; ++l) {
      perm.push_back(k + i * f + l);
      perm.push_back(k + k * f + i * f + l);
    }
  }
  return ad::gather_cols(all, perm);
}

std::vector<double> positional_encode(std::span<const double> x, int freq) {
  if (freq < 0) throw std::invalid_argument("positional encoding frequency must be >= 0");
  std::vector<double> out;
  out.reserve(encoded_dim(x.size(), freq));
  for (double v : x) {
    out.push_back(v);
    for (int l = 0; l < freq; ++l) {
      // Same rounding as the tensor path: (2^l pi) * x.
      const double a = std::ldexp(std::numbers::pi, l) * v;
      out.push_back(std::sin(a));
      out.push_back(std::cos(a));
    }
  }
  return out;
}

RadianceConfig RadianceConfig::full() { return RadianceConfig{}; }

RadianceConfig RadianceConfig::lightweight() {
  RadianceConfig c;
  c.preset = "lightweight";
  c.trunk = {64, 64};
  c.color = {32};
  return c;
}

RadianceConfig RadianceConfig::from_preset(const std::string& name) {
  if (name == "full") return full();
  if (name == "lightweight") return lightweight();
  throw std::invalid_argument("unknown radiance preset '" + name + "'");
}

std::size_t RadianceConfig::trunk_input_dim() const {
  return encode_features ? encoded_dim(feature_dim, feature_freq) : feature_dim;
}

std::size_t RadianceConfig::view_input_dim() const { return encode_view ? encoded_dim(6, view_freq) : 6; }

void RadianceConfig::validate() const {
  if (feature_dim == 0) throw std::invalid_argument("radiance feature dim must be positive");
  if (feature_freq < 0 || view_freq < 0) throw std::invalid_argument("positional encoding frequency must be >= 0");
  if (trunk.empty()) throw std::invalid_argument("radiance trunk needs at least one layer");
  for (auto w : trunk) {
    if (w == 0) throw std::invalid_argument("radiance layer widths must be positive");
  }
  for (auto w : color) {
    if (w == 0) throw std::invalid_argument("radiance layer widths must be positive");
  }
}

RadianceModel RadianceModel::create(const RadianceConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  RadianceModel m;
  m.config = cfg;
  std::vector<std::size_t> tw{cfg.trunk_input_dim()};
  tw.insert(tw.end(), cfg.trunk.begin(), cfg.trunk.end());
  m.trunk = Mlp(tw, derive_seed(seed, {1}));
  m.opacity = Mlp({cfg.trunk.back(), 1}, derive_seed(seed, {2}));
  std::vector<std::size_t> cw{cfg.trunk.back() + cfg.view_input_dim()};
  cw.insert(cw.end(), cfg.color.begin(), cfg.color.end());
  cw.push_back(3);
  m.color = Mlp(cw, derive_seed(seed, {3}));
  return m;
}

std::vector<ad::Tensor> RadianceModel::parameters() const {
  auto p = trunk.parameters();
  for (const auto& t : opacity.parameters()) p.push_back(t);
  for (const auto& t : color.parameters()) p.push_back(t);
  return p;
}

RadianceModel RadianceModel::clone() const { return {config, trunk.clone(), opacity.clone(), color.clone()}; }

void RadianceModel::set_requires_grad(bool value) {
  trunk.set_requires_grad(value);
  opacity.set_requires_grad(value);
  color.set_requires_grad(value);
}

RadianceOutput eval_radiance(const ad::Tensor& features, const ad::Tensor& view, const RadianceModel& model) {
  const auto& cfg = model.config;
  if (features.rank() != 2 || features.cols() != cfg.feature_dim) {
    throw std::invalid_argument("eval_radiance: features must be B x " + std::to_string(cfg.feature_dim));
  }
  if (view.rank() != 2 || view.cols() != 6 || view.rows() != features.rows()) {
    throw std::invalid_argument("eval_radiance: view factor must be B x 6");
  }
  const ad::Tensor fin = cfg.encode_features ? positional_encode(features, cfg.feature_freq) : features;
  const ad::Tensor vin = cfg.encode_view ? positional_encode(view, cfg.view_freq) : view;
  const ad::Tensor h = model.trunk.forward(fin, true);
  RadianceOutput out;
  out.alpha = ad::sigmoid(model.opacity.forward(h));
  const ad::Tensor parts[] = {h, vin};
  out.rgb = ad::sigmoid(model.color.forward(ad::concat(parts, 1)));
  return out;
}

Composite composite(const ad::Tensor& alpha, const ad::Tensor& rgb) {
  if (alpha.rank() != 2 || rgb.rank() != 2 || rgb.rows() != alpha.rows() || rgb.cols() != 3 * alpha.cols()) {
    throw std::invalid_argument("composite: expected alpha R x J and rgb R x 3J");
  }
  const std::size_t r = alpha.rows(), j_count = alpha.cols();
  Composite out;
  if (j_count == 0) {
    out.color = ad::Tensor::zeros({r, 3});
    out.acc = ad::Tensor::zeros({r, 1});
    return out;
  }
  ad::Tensor transmittance;  // undefined means 1
  for (std::size_t j = 0; j < j_count; ++j) {
    const std::size_t acol[] = {j};
    const std::size_t ccol[] = {3 * j, 3 * j + 1, 3 * j + 2};
    const ad::Tensor a = ad::gather_cols(alpha, acol);
    const ad::Tensor w = transmittance.defined() ? ad::mul(transmittance, a) : a;
    const ad::Tensor c = ad::mul(w, ad::gather_cols(rgb, ccol));
    out.color = out.color.defined() ? ad::add(out.color, c) : c;
    out.acc = out.acc.defined() ? ad::add(out.acc, w) : w;
    if (j + 1 < j_count) {
      const ad::Tensor keep = ad::add_scalar(ad::neg(a), 1.0);
      transmittance = transmittance.defined() ? ad::mul(transmittance, keep) : keep;
    }
  }
  return out;
}

ad::Tensor blend_hierarchies(std::span<const Composite> levels, const ad::Tensor& background) {
  if (levels.empty()) throw std::invalid_argument("blend_hierarchies: no levels");
  if (background.numel() != 3) throw std::invalid_argument("blend_hierarchies: background must have 3 channels");
  ad::Tensor out = levels[0].color;
  ad::Tensor pass = ad::add_scalar(ad::neg(levels[0].acc), 1.0);
  for (std::size_t s = 1; s < levels.size(); ++s) {
    out = ad::add(out, ad::mul(pass, levels[s].color));
    pass = ad::mul(pass, ad::add_scalar(ad::neg(levels[s].acc), 1.0));
  }
  const ad::Tensor bg = background.rank() == 2 ? background : ad::reshape(background, {1, 3});
  return ad::add(out, ad::mul(pass, bg));
}

}  // namespace dnmp
