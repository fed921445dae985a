#include "dnmp/kernels.hpp"

#include <Eigen/Core>

namespace dnmp::kernels {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

template <typename LhsBlock, typename Rhs>
void assign_block(MutMap& c, std::size_t r0, std::size_t len, const LhsBlock& lhs, const Rhs& rhs,
                  bool accumulate) {
  auto dst = c.middleRows(static_cast<Eigen::Index>(r0), static_cast<Eigen::Index>(len));
  if (accumulate) {
    dst.noalias() += lhs * rhs;
  } else {
    dst.noalias() = lhs * rhs;
  }
}

}  // namespace

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate) {
  if (m == 0 || n == 0) return;
  const auto M = static_cast<Eigen::Index>(m);
  const auto N = static_cast<Eigen::Index>(n);
  const auto K = static_cast<Eigen::Index>(k);
  MutMap cm(c, M, N);
  if (k == 0) {
    if (!accumulate) cm.setZero();
    return;
  }
  const ConstMap am = ta == Trans::kNo ? ConstMap(a, M, K) : ConstMap(a, K, M);
  const ConstMap bm = tb == Trans::kNo ? ConstMap(b, K, N) : ConstMap(b, N, K);
  const std::ptrdiff_t blocks = static_cast<std::ptrdiff_t>((m + kGemmRowBlock - 1) / kGemmRowBlock);

#pragma omp parallel for schedule(static) if (blocks > 1 && m * n * k > (1u << 16))
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t r0 = static_cast<std::size_t>(blk) * kGemmRowBlock;
    const std::size_t len = std::min(kGemmRowBlock, m - r0);
    const auto R0 = static_cast<Eigen::Index>(r0);
    const auto L = static_cast<Eigen::Index>(len);
    if (ta == Trans::kNo) {
      if (tb == Trans::kNo) {
        assign_block(cm, r0, len, am.middleRows(R0, L), bm, accumulate);
      } else {
        assign_block(cm, r0, len, am.middleRows(R0, L), bm.transpose(), accumulate);
      }
    } else {
      if (tb == Trans::kNo) {
        assign_block(cm, r0, len, am.middleCols(R0, L).transpose(), bm, accumulate);
      } else {
        assign_block(cm, r0, len, am.middleCols(R0, L).transpose(), bm.transpose(), accumulate);
      }
    }
  }
}

void gemm_reference(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta == Trans::kNo ? a[i * k + p] : a[p * m + i];
        const double bv = tb == Trans::kNo ? b[p * n + j] : b[j * k + p];
        acc += av * bv;
      }
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
  }
}

}  // namespace dnmp::kernels
