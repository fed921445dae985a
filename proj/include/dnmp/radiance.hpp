#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dnmp/autodiff/tensor.hpp"
#include "dnmp/nn.hpp"

namespace dnmp {

// Per-coordinate sinusoidal encoding. Each input column x becomes
// x, sin(pi x), cos(pi x), sin(2 pi x), cos(2 pi x), ... up to 2^(freq-1) pi,
// so B x k maps to B x k(1 + 2 freq).
ad::Tensor positional_encode(const ad::Tensor& x, int freq);
inline std::size_t encoded_dim(std::size_t k, int freq) { return k * (1 + 2 * static_cast<std::size_t>(freq)); }

// Same layout for a single vector, without the tape.
std::vector<double> positional_encode(std::span<const double> x, int freq);

struct RadianceConfig {
  std::string preset = "full";
  std::size_t feature_dim = 21;
  int feature_freq = 4;
  int view_freq = 4;
  bool encode_features = true;
  bool encode_view = true;
  std::vector<std::size_t> trunk{128, 128, 128, 128};
  std::vector<std::size_t> color{64, 64};

  static RadianceConfig full();
  static RadianceConfig lightweight();
  static RadianceConfig from_preset(const std::string& name);

  std::size_t trunk_input_dim() const;
  // The view factor is the unit normal followed by the unit ray direction.
  std::size_t view_input_dim() const;
  void validate() const;
};

// Opacity comes from the trunk alone; the view factor only enters the color
// branch.
struct RadianceModel {
  RadianceConfig config;
  Mlp trunk;    // relu on every layer
  Mlp opacity;  // trunk width -> 1
  Mlp color;    // trunk width + view dim -> ... -> 3

  static RadianceModel create(const RadianceConfig& cfg, std::uint64_t seed);
  std::vector<ad::Tensor> parameters() const;
  RadianceModel clone() const;
  void set_requires_grad(bool value);
};

struct RadianceOutput {
  ad::Tensor rgb;    // B x 3
  ad::Tensor alpha;  // B x 1
};

// features B x C, view B x 6.
RadianceOutput eval_radiance(const ad::Tensor& features, const ad::Tensor& view, const RadianceModel& model);

struct Composite {
  ad::Tensor color;  // R x 3
  ad::Tensor acc;    // R x 1
};

// Front-to-back compositing of R rays with J depth-sorted slots each:
// alpha is R x J, rgb is R x 3J (slot-major). Empty slots carry alpha 0.
Composite composite(const ad::Tensor& alpha, const ad::Tensor& rgb);

// Levels ordered finest to coarsest; background is 1 x 3.
ad::Tensor blend_hierarchies(std::span<const Composite> levels, const ad::Tensor& background);

}  // namespace dnmp
