// Compiled with -mavx2 -mfma. Nothing here may run before the CPUID check in
// kernels_dispatch.cpp has confirmed support.

#include <immintrin.h>

#include "sgnn/kernels.hpp"

namespace {

#include "kernels_impl.hpp"

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

struct Avx2Prim {
  static double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
      acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
      acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
      acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
  }

  static void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
      _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
      _mm256_storeu_pd(y + i + 4,
                       _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
    }
    for (; i + 4 <= n; i += 4) {
      _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
  }
};

}  // namespace

namespace sgnn::kernels::detail {

const KernelTable& avx2_table() {
  static const KernelTable table{
      "avx2",
      &Avx2Prim::dot,
      &Avx2Prim::axpy,
      &gemm_nn_impl<Avx2Prim>,
      &gemm_nt_impl<Avx2Prim>,
      &gemm_tn_impl<Avx2Prim>,
      &csr_mm_impl<Avx2Prim>,
      &csr_tmm_impl<Avx2Prim>,
  };
  return table;
}

}  // namespace sgnn::kernels::detail
