#include "dnmp/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dnmp/autodiff/tape.hpp"

namespace dnmp::ad {

GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  Tensor probe(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), true);

  std::vector<double> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor y = f(probe);
    if (y.numel() != 1) throw std::invalid_argument("grad_check: function must return a scalar");
    if (!tape.contains(y)) {
      // f did not depend on x through any recorded op.
      analytic.assign(x.numel(), 0.0);
    } else {
      tape.backward(y);
      analytic.assign(probe.grad().begin(), probe.grad().end());
    }
  }

  GradCheckResult result;
  NoGradScope no_grad;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    probe.mutable_data()[i] = orig + h;
    const double fp = f(probe).item();
    probe.mutable_data()[i] = orig - h;
    const double fm = f(probe).item();
    probe.mutable_data()[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
      result.finite = false;
      result.max_rel_error = std::numeric_limits<double>::infinity();
      result.worst_index = i;
      continue;
    }
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
    }
  }
  return result;
}

}  // namespace dnmp::ad
