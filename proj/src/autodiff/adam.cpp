#include "dnmp/autodiff/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace dnmp::ad {

Adam::Adam(std::vector<Tensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.lr >= 0.0) || !(config_.beta1 >= 0.0 && config_.beta1 < 1.0) ||
      !(config_.beta2 >= 0.0 && config_.beta2 < 1.0) || !(config_.eps > 0.0)) {
    throw std::invalid_argument("invalid Adam hyperparameters");
  }
  for (const auto& p : params_) {
    if (!p.defined() || !p.requires_grad()) {
      throw std::invalid_argument("Adam parameter does not require grad");
    }
    state_.first_moment.emplace_back(p.numel(), 0.0);
    state_.second_moment.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  for (const auto& p : params_) {
    if (!p.requires_grad() || p.grad().size() != p.numel()) {
      throw std::invalid_argument("Adam step on a parameter without a gradient buffer");
    }
  }
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto& m = state_.first_moment[i];
    auto& v = state_.second_moment[i];
    auto g = p.mutable_grad();
    auto x = p.mutable_data();
    for (std::size_t j = 0; j < x.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      x[j] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
      g[j] = 0.0;
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace dnmp::ad
