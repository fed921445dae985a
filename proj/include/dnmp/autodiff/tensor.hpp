#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dnmp::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tape;

struct TensorStorage {
  Shape shape;
  std::vector<double> data;
  // Sized to data iff requires_grad.
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t version = 0;
};

// Dense row-major float64 tensor with shared storage. Copies of a Tensor
// alias the same buffer; use clone() for an independent copy.
//
// Rank <= 2 tensors are viewed as matrices by the ops: a scalar is 1x1,
// a vector of length n is 1xn.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);
  // Column vector (n x 1).
  static Tensor column(std::vector<double> values);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return impl_->data; }
  // Bumps the version counter; caches keyed on version() become stale.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value);
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad() { return impl_->grad; }
  void zero_grad();

  std::uint64_t version() const { return impl_->version; }
  void bump_version() { ++impl_->version; }

  // Independent copy; keeps requires_grad, drops the gradient contents.
  Tensor clone() const;
  // Independent copy that never requires grad.
  Tensor detach() const;

  const TensorStorage* id() const { return impl_.get(); }
  const std::shared_ptr<TensorStorage>& storage() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorStorage> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorStorage> impl_;
};

}  // namespace dnmp::ad
