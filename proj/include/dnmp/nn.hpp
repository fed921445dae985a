#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dnmp/autodiff/tensor.hpp"

namespace dnmp {

// y = x W + b with W stored in x out.
struct Linear {
  ad::Tensor weight;
  ad::Tensor bias;  // 1 x out

  std::size_t in_features() const { return weight.shape()[0]; }
  std::size_t out_features() const { return weight.shape()[1]; }
  ad::Tensor forward(const ad::Tensor& x) const;
};

// Stack of Linear layers with ReLU between them. Weights are He-uniform,
// biases zero.
struct Mlp {
  std::vector<Linear> layers;

  Mlp() = default;
  Mlp(const std::vector<std::size_t>& widths, std::uint64_t seed);

  // ReLU after every layer except the last, unless relu_last is set.
  ad::Tensor forward(const ad::Tensor& x, bool relu_last = false) const;
  std::vector<ad::Tensor> parameters() const;
  std::vector<std::size_t> widths() const;
  void zero_last_layer();
  void set_requires_grad(bool value);
  Mlp clone() const;
};

}  // namespace dnmp
