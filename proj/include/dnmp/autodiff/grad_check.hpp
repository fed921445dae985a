#pragma once

#include <cstddef>
#include <functional>

#include "dnmp/autodiff/tensor.hpp"

namespace dnmp::ad {

struct GradCheckResult {
  // max_i |analytic_i - numeric_i| / max(1, |analytic_i|)
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool finite = true;
};

// Compares reverse-mode gradients of a scalar function against central
// differences. f is evaluated with x as a requires-grad leaf; it may capture
// other tensors, which are treated as constants.
GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double h = 1e-5);

}  // namespace dnmp::ad
