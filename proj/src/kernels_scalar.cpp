#include "sgnn/kernels.hpp"

namespace {

#include "kernels_impl.hpp"

struct ScalarPrim {
  static double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
  }
  static void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
  }
};

}  // namespace

namespace sgnn::kernels {

const KernelTable& scalar() {
  static const KernelTable table{
      "scalar",
      &ScalarPrim::dot,
      &ScalarPrim::axpy,
      &gemm_nn_impl<ScalarPrim>,
      &gemm_nt_impl<ScalarPrim>,
      &gemm_tn_impl<ScalarPrim>,
      &csr_mm_impl<ScalarPrim>,
      &csr_tmm_impl<ScalarPrim>,
  };
  return table;
}

}  // namespace sgnn::kernels
