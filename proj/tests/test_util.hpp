#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dnmp/autodiff/tensor.hpp"

namespace dnmp::test {

inline std::vector<double> values(const ad::Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline ad::Tensor random_tensor(ad::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  const auto n = ad::numel(shape);
  return ad::Tensor(std::move(shape), random_values(n, seed, lo, hi));
}

}  // namespace dnmp::test
