#pragma once

#include <cstddef>

// Dense kernels behind the autodiff matmul. Every kernel has an OpenMP
// version used by the library and a plain serial reference kept for tests
// and the benchmark.
namespace dnmp::kernels {

enum class Trans { kNo, kYes };

// C (m x n) = op(A) (m x k) * op(B) (k x n), all row-major. A is stored
// m x k when ta == kNo and k x m otherwise; likewise for B. With
// accumulate, C += product.
//
// Work is split into fixed 64-row blocks of C. The reduction dimension is
// never split, so results do not depend on the thread count.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);

void gemm_reference(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c, bool accumulate);

inline constexpr std::size_t kGemmRowBlock = 64;

}  // namespace dnmp::kernels
