#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dnmp/autodiff/tensor.hpp"

// Differentiable operations. The primitive set is closed; everything in the
// "composed" section at the bottom is built from it.
//
// Binary elementwise ops broadcast over rank <= 2 operands (numpy rules on
// the matrix view). Reductions along an axis keep the reduced dimension.
namespace dnmp::ad {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& x);
// axis 0 -> 1 x C, axis 1 -> R x 1.
Tensor sum(const Tensor& x, int axis);
Tensor mean(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor cos(const Tensor& x);
Tensor sqrt(const Tensor& x);
// d|x|/dx is taken as 0 at x == 0.
Tensor abs(const Tensor& x);

// Rank-2 concatenation; axis 0 stacks rows, axis 1 stacks columns.
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor reshape(const Tensor& x, Shape shape);

// out.flat[i] = x.flat[index[i]].
Tensor gather(const Tensor& x, std::span<const std::size_t> index, Shape out_shape);
// out.flat[index[i]] += x.flat[i], out zero-initialised.
Tensor scatter_add(const Tensor& x, std::span<const std::size_t> index, Shape out_shape);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
Tensor scatter_add_rows(const Tensor& x, std::span<const std::size_t> rows, std::size_t out_rows);

// ---- composed ----

inline Tensor neg(const Tensor& x) { return scale(x, -1.0); }
inline Tensor square(const Tensor& x) { return mul(x, x); }
Tensor gather_cols(const Tensor& x, std::span<const std::size_t> cols);
Tensor l1(const Tensor& x);
Tensor l2(const Tensor& x);
// Row-wise dot product of two R x C tensors -> R x 1.
Tensor dot_rows(const Tensor& a, const Tensor& b);
// Row-wise cross product of two R x 3 tensors.
Tensor cross_rows(const Tensor& a, const Tensor& b);
Tensor normalize_rows(const Tensor& x);

}  // namespace dnmp::ad
