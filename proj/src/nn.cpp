#include "dnmp/nn.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "dnmp/autodiff/ops.hpp"
#include "dnmp/random.hpp"

namespace dnmp {

ad::Tensor Linear::forward(const ad::Tensor& x) const { return ad::add(ad::matmul(x, weight), bias); }

Mlp::Mlp(const std::vector<std::size_t>& widths, std::uint64_t seed) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp needs at least input and output widths");
  std::mt19937_64 rng(mix64(seed));
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> w(in * out);
    for (auto& v : w) v = dist(rng);
    layers.push_back({ad::Tensor({in, out}, std::move(w), true), ad::Tensor::zeros({1, out}, true)});
  }
}

ad::Tensor Mlp::forward(const ad::Tensor& x, bool relu_last) const {
  ad::Tensor h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = layers[l].forward(h);
    if (l + 1 < layers.size() || relu_last) h = ad::relu(h);
  }
  return h;
}

std::vector<ad::Tensor> Mlp::parameters() const {
  std::vector<ad::Tensor> p;
  for (const auto& l : layers) {
    p.push_back(l.weight);
    p.push_back(l.bias);
  }
  return p;
}

std::vector<std::size_t> Mlp::widths() const {
  std::vector<std::size_t> w;
  if (layers.empty()) return w;
  w.push_back(layers.front().in_features());
  for (const auto& l : layers) w.push_back(l.out_features());
  return w;
}

void Mlp::zero_last_layer() {
  auto& last = layers.back();
  for (auto& v : last.weight.mutable_data()) v = 0.0;
  for (auto& v : last.bias.mutable_data()) v = 0.0;
}

void Mlp::set_requires_grad(bool value) {
  for (auto& l : layers) {
    l.weight.set_requires_grad(value);
    l.bias.set_requires_grad(value);
  }
}

Mlp Mlp::clone() const {
  Mlp m;
  for (const auto& l : layers) m.layers.push_back({l.weight.clone(), l.bias.clone()});
  return m;
}

}  // namespace dnmp
