#include "dnmp/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dnmp/autodiff/tape.hpp"
#include "dnmp/kernels.hpp"

namespace dnmp::ad {

namespace {

bool needs_record(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  for (const auto* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

Tensor make_result(Shape shape, std::vector<double> data, bool record) {
  Tensor out(std::move(shape), std::move(data), false);
  if (record) out.storage()->requires_grad = true;
  return out;
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() > 2) {
    throw std::invalid_argument(std::string(op) + ": rank-" + std::to_string(t.rank()) + " operand");
  }
}

struct Broadcast {
  std::size_t rows, cols;
  std::size_t a_rows, a_cols, b_rows, b_cols;
  Shape shape;
};

Broadcast broadcast(const Tensor& a, const Tensor& b, const char* op) {
  require_matrix(a, op);
  require_matrix(b, op);
  Broadcast bc{};
  bc.a_rows = a.rows();
  bc.a_cols = a.cols();
  bc.b_rows = b.rows();
  bc.b_cols = b.cols();
  auto merge = [&](std::size_t x, std::size_t y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw std::invalid_argument(std::string(op) + ": cannot broadcast " + to_string(a.shape()) +
                                " with " + to_string(b.shape()));
  };
  bc.rows = merge(bc.a_rows, bc.b_rows);
  bc.cols = merge(bc.a_cols, bc.b_cols);
  const auto rank = std::max(a.rank(), b.rank());
  if (rank == 2) {
    bc.shape = {bc.rows, bc.cols};
  } else if (rank == 1) {
    bc.shape = {bc.cols};
  }
  return bc;
}

// Elementwise binary op with broadcasting. Fwd(x, y) -> value,
// Dx(x, y, out) and Dy(x, y, out) -> local partial derivatives.
template <typename Fwd, typename Dx, typename Dy>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Dx dx, Dy dy) {
  const auto bc = broadcast(a, b, name);
  const auto& ad = a.data();
  const auto& bd = b.data();
  std::vector<double> out(bc.rows * bc.cols);
  const bool same = bc.a_rows == bc.b_rows && bc.a_cols == bc.b_cols;
  auto ia = [bc](std::size_t r, std::size_t c) {
    return (bc.a_rows == 1 ? 0 : r) * bc.a_cols + (bc.a_cols == 1 ? 0 : c);
  };
  auto ib = [bc](std::size_t r, std::size_t c) {
    return (bc.b_rows == 1 ? 0 : r) * bc.b_cols + (bc.b_cols == 1 ? 0 : c);
  };
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(ad[i], bd[i]);
  } else {
    for (std::size_t r = 0; r < bc.rows; ++r) {
      for (std::size_t c = 0; c < bc.cols; ++c) out[r * bc.cols + c] = fwd(ad[ia(r, c)], bd[ib(r, c)]);
    }
  }
  const bool record = needs_record({&a, &b});
  Tensor result = make_result(bc.shape, std::move(out), record);
  if (record) {
    active_tape()->record(
        result, {a, b},
        [a, b, result, bc, same, ia, ib, dx, dy](std::span<const double> g, std::span<std::vector<double>* const> gin) {
          const auto& ad = a.data();
          const auto& bd = b.data();
          const auto& od = result.data();
          auto* ga = gin[0];
          auto* gb = gin[1];
          if (same) {
            for (std::size_t i = 0; i < g.size(); ++i) {
              if (ga) (*ga)[i] += g[i] * dx(ad[i], bd[i], od[i]);
              if (gb) (*gb)[i] += g[i] * dy(ad[i], bd[i], od[i]);
            }
            return;
          }
          for (std::size_t r = 0; r < bc.rows; ++r) {
            for (std::size_t c = 0; c < bc.cols; ++c) {
              const std::size_t o = r * bc.cols + c;
              const std::size_t i = ia(r, c);
              const std::size_t j = ib(r, c);
              if (ga) (*ga)[i] += g[o] * dx(ad[i], bd[j], od[o]);
              if (gb) (*gb)[j] += g[o] * dy(ad[i], bd[j], od[o]);
            }
          }
        });
  }
  return result;
}

// Elementwise unary op. Deriv(x, out) -> local derivative.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto& xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = fwd(xd[i]);
  const bool record = needs_record({&x});
  Tensor result = make_result(x.shape(), std::move(out), record);
  if (record) {
    active_tape()->record(result, {x},
                          [x, result, deriv](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                            auto& gx = *gin[0];
                            const auto& xd = x.data();
                            const auto& od = result.data();
                            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xd[i], od[i]);
                          });
  }
  return result;
}

double stable_sigmoid(double v) {
  if (v >= 0) {
    const double e = std::exp(-v);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double o) { return -o / y; });
}

Tensor scale(const Tensor& x, double s) {
  return unary(
      x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary(
      x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw std::invalid_argument("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                                to_string(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n);
  kernels::gemm(kernels::Trans::kNo, kernels::Trans::kNo, m, n, k, a.data().data(), b.data().data(), out.data(),
                false);
  const bool record = needs_record({&a, &b});
  Tensor result = make_result({m, n}, std::move(out), record);
  if (record) {
    active_tape()->record(result, {a, b},
                          [a, b, m, n, k](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                            using kernels::Trans;
                            if (gin[0]) {
                              kernels::gemm(Trans::kNo, Trans::kYes, m, k, n, g.data(), b.data().data(),
                                            gin[0]->data(), true);
                            }
                            if (gin[1]) {
                              kernels::gemm(Trans::kYes, Trans::kNo, k, n, m, a.data().data(), g.data(),
                                            gin[1]->data(), true);
                            }
                          });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  const bool record = needs_record({&x});
  Tensor result = make_result({}, {s}, record);
  if (record) {
    active_tape()->record(result, {x}, [](std::span<const double> g, std::span<std::vector<double>* const> gin) {
      for (auto& v : *gin[0]) v += g[0];
    });
  }
  return result;
}

Tensor sum(const Tensor& x, int axis) {
  require_matrix(x, "sum");
  if (axis != 0 && axis != 1) throw std::invalid_argument("sum: axis must be 0 or 1");
  const std::size_t R = x.rows(), C = x.cols();
  const auto& xd = x.data();
  Shape shape = axis == 0 ? Shape{1, C} : Shape{R, 1};
  std::vector<double> out(axis == 0 ? C : R, 0.0);
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < C; ++c) out[axis == 0 ? c : r] += xd[r * C + c];
  }
  const bool record = needs_record({&x});
  Tensor result = make_result(std::move(shape), std::move(out), record);
  if (record) {
    active_tape()->record(result, {x},
                          [R, C, axis](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                            auto& gx = *gin[0];
                            for (std::size_t r = 0; r < R; ++r) {
                              for (std::size_t c = 0; c < C; ++c) gx[r * C + c] += g[axis == 0 ? c : r];
                            }
                          });
  }
  return result;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw std::invalid_argument("mean of empty tensor");
  const double inv = 1.0 / static_cast<double>(x.numel());
  double s = 0.0;
  for (double v : x.data()) s += v;
  const bool record = needs_record({&x});
  Tensor result = make_result({}, {s * inv}, record);
  if (record) {
    active_tape()->record(result, {x}, [inv](std::span<const double> g, std::span<std::vector<double>* const> gin) {
      for (auto& v : *gin[0]) v += g[0] * inv;
    });
  }
  return result;
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, stable_sigmoid, [](double, double o) { return o * (1.0 - o); });
}

Tensor sin(const Tensor& x) {
  return unary(
      x, [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); });
}

Tensor cos(const Tensor& x) {
  return unary(
      x, [](double v) { return std::cos(v); }, [](double v, double) { return -std::sin(v); });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      x, [](double v) { return std::sqrt(v); }, [](double, double o) { return 0.5 / o; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat of zero tensors");
  if (axis != 0 && axis != 1) throw std::invalid_argument("concat: axis must be 0 or 1");
  for (const auto& p : parts) {
    if (p.rank() != 2) throw std::invalid_argument("concat: operands must be rank 2");
  }
  std::size_t R = 0, C = 0;
  if (axis == 0) {
    C = parts[0].cols();
    for (const auto& p : parts) {
      if (p.cols() != C) throw std::invalid_argument("concat: column mismatch");
      R += p.rows();
    }
  } else {
    R = parts[0].rows();
    for (const auto& p : parts) {
      if (p.rows() != R) throw std::invalid_argument("concat: row mismatch");
      C += p.cols();
    }
  }
  std::vector<double> out(R * C);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const auto& pd = p.data();
    if (axis == 0) {
      std::copy(pd.begin(), pd.end(), out.begin() + static_cast<std::ptrdiff_t>(off * C));
      off += p.rows();
    } else {
      const std::size_t pc = p.cols();
      for (std::size_t r = 0; r < R; ++r) {
        std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(r * pc), pc,
                    out.begin() + static_cast<std::ptrdiff_t>(r * C + off));
      }
      off += pc;
    }
  }
  bool record = false;
  if (active_tape()) {
    for (const auto& p : parts) record = record || p.requires_grad();
  }
  Tensor result = make_result({R, C}, std::move(out), record);
  if (record) {
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    std::vector<std::size_t> widths;
    for (const auto& p : parts) widths.push_back(axis == 0 ? p.rows() : p.cols());
    active_tape()->record(
        result, inputs,
        [offsets, widths, R, C, axis](std::span<const double> g, std::span<std::vector<double>* const> gin) {
          for (std::size_t k = 0; k < gin.size(); ++k) {
            if (!gin[k]) continue;
            auto& gk = *gin[k];
            if (axis == 0) {
              const std::size_t base = offsets[k] * C;
              for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += g[base + i];
            } else {
              const std::size_t w = widths[k];
              for (std::size_t r = 0; r < R; ++r) {
                for (std::size_t c = 0; c < w; ++c) gk[r * w + c] += g[r * C + offsets[k] + c];
              }
            }
          }
        });
  }
  return result;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw std::invalid_argument("reshape " + to_string(x.shape()) + " to " + to_string(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  const bool record = needs_record({&x});
  Tensor result = make_result(std::move(shape), std::move(out), record);
  if (record) {
    active_tape()->record(result, {x}, [](std::span<const double> g, std::span<std::vector<double>* const> gin) {
      auto& gx = *gin[0];
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return result;
}

Tensor gather(const Tensor& x, std::span<const std::size_t> index, Shape out_shape) {
  if (numel(out_shape) != index.size()) throw std::invalid_argument("gather: index count does not match shape");
  const auto& xd = x.data();
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= xd.size()) throw std::out_of_range("gather: index out of range");
    out[i] = xd[index[i]];
  }
  const bool record = needs_record({&x});
  Tensor result = make_result(std::move(out_shape), std::move(out), record);
  if (record) {
    std::vector<std::size_t> idx(index.begin(), index.end());
    active_tape()->record(result, {x},
                          [idx = std::move(idx)](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                            auto& gx = *gin[0];
                            for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += g[i];
                          });
  }
  return result;
}

Tensor scatter_add(const Tensor& x, std::span<const std::size_t> index, Shape out_shape) {
  if (index.size() != x.numel()) throw std::invalid_argument("scatter_add: index count does not match input");
  const std::size_t n = numel(out_shape);
  const auto& xd = x.data();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= n) throw std::out_of_range("scatter_add: index out of range");
    out[index[i]] += xd[i];
  }
  const bool record = needs_record({&x});
  Tensor result = make_result(std::move(out_shape), std::move(out), record);
  if (record) {
    std::vector<std::size_t> idx(index.begin(), index.end());
    active_tape()->record(result, {x},
                          [idx = std::move(idx)](std::span<const double> g, std::span<std::vector<double>* const> gin) {
                            auto& gx = *gin[0];
                            for (std::size_t i = 0; i < idx.size(); ++i) gx[i] += g[idx[i]];
                          });
  }
  return result;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_matrix(x, "gather_rows");
  const std::size_t R = x.rows(), C = x.cols();
  const auto& xd = x.data();
  std::vector<double> out(rows.size() * C);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= R) throw std::out_of_range("gather_rows: row out of range");
    std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(rows[i] * C), C,
                out.begin() + static_cast<std::ptrdiff_t>(i * C));
  }
  const bool record = needs_record({&x});
  Tensor result = make_result({rows.size(), C}, std::move(out), record);
  if (record) {
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    active_tape()->record(
        result, {x}, [idx = std::move(idx), C](std::span<const double> g, std::span<std::vector<double>* const> gin) {
          auto& gx = *gin[0];
          for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::size_t c = 0; c < C; ++c) gx[idx[i] * C + c] += g[i * C + c];
          }
        });
  }
  return result;
}

Tensor scatter_add_rows(const Tensor& x, std::span<const std::size_t> rows, std::size_t out_rows) {
  require_matrix(x, "scatter_add_rows");
  if (rows.size() != x.rows()) throw std::invalid_argument("scatter_add_rows: row count mismatch");
  const std::size_t C = x.cols();
  const auto& xd = x.data();
  std::vector<double> out(out_rows * C, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= out_rows) throw std::out_of_range("scatter_add_rows: row out of range");
    for (std::size_t c = 0; c < C; ++c) out[rows[i] * C + c] += xd[i * C + c];
  }
  const bool record = needs_record({&x});
  Tensor result = make_result({out_rows, C}, std::move(out), record);
  if (record) {
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    active_tape()->record(
        result, {x}, [idx = std::move(idx), C](std::span<const double> g, std::span<std::vector<double>* const> gin) {
          auto& gx = *gin[0];
          for (std::size_t i = 0; i < idx.size(); ++i) {
            for (std::size_t c = 0; c < C; ++c) gx[i * C + c] += g[idx[i] * C + c];
          }
        });
  }
  return result;
}

Tensor gather_cols(const Tensor& x, std::span<const std::size_t> cols) {
  require_matrix(x, "gather_cols");
  const std::size_t R = x.rows(), C = x.cols();
  std::vector<std::size_t> idx;
  idx.reserve(R * cols.size());
  for (std::size_t r = 0; r < R; ++r) {
    for (auto c : cols) {
      if (c >= C) throw std::out_of_range("gather_cols: column out of range");
      idx.push_back(r * C + c);
    }
  }
  return gather(x, idx, {R, cols.size()});
}

Tensor l1(const Tensor& x) { return sum(abs(x)); }

Tensor l2(const Tensor& x) { return sqrt(sum(square(x))); }

Tensor dot_rows(const Tensor& a, const Tensor& b) { return sum(mul(a, b), 1); }

Tensor cross_rows(const Tensor& a, const Tensor& b) {
  static constexpr std::size_t yzx[] = {1, 2, 0};
  static constexpr std::size_t zxy[] = {2, 0, 1};
  return sub(mul(gather_cols(a, yzx), gather_cols(b, zxy)), mul(gather_cols(a, zxy), gather_cols(b, yzx)));
}

Tensor normalize_rows(const Tensor& x) { return div(x, sqrt(dot_rows(x, x))); }

}  // namespace dnmp::ad
