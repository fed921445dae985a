#pragma once

#include <cstdint>
#include <vector>

#include "dnmp/autodiff/tensor.hpp"

namespace dnmp::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

// Bias-corrected Adam over a fixed parameter list. step() consumes the
// parameters' grad buffers and zeroes them.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  void step();
  void zero_grad();

  const AdamConfig& config() const { return config_; }
  const AdamState& state() const { return state_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  AdamState state_;
};

}  // namespace dnmp::ad
