#include "dnmp/autodiff/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace dnmp::ad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorStorage>()) {
  if (ad::numel(shape) != data.size()) {
    throw std::invalid_argument("tensor shape " + to_string(shape) + " does not match " +
                                std::to_string(data.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  set_requires_grad(requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = ad::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = ad::numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::column(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n, 1}, std::move(values));
}

const Shape& Tensor::shape() const {
  if (!impl_) throw std::logic_error("use of undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::rows() const {
  const auto& s = shape();
  if (s.size() > 2) throw std::invalid_argument("matrix view of rank-" + std::to_string(s.size()) + " tensor");
  return s.size() == 2 ? s[0] : 1;
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  if (s.size() > 2) throw std::invalid_argument("matrix view of rank-" + std::to_string(s.size()) + " tensor");
  return s.empty() ? 1 : s.back();
}

std::span<double> Tensor::mutable_data() {
  ++impl_->version;
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("item() on tensor of shape " + to_string(shape()));
  return impl_->data[0];
}

void Tensor::set_requires_grad(bool value) {
  impl_->requires_grad = value;
  if (value) {
    impl_->grad.assign(impl_->data.size(), 0.0);
  } else {
    impl_->grad.clear();
  }
}

void Tensor::zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

Tensor Tensor::clone() const {
  Tensor t(impl_->shape, impl_->data, impl_->requires_grad);
  return t;
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

}  // namespace dnmp::ad
