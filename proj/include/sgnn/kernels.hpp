#pragma once

// Data-parallel inner loops behind DenseMatrix/SparseMatrix arithmetic.
//
// Every kernel exists as a portable scalar reference and, on x86-64 builds, an
// AVX2/FMA variant. The variant is chosen once at first use from CPUID; setting
// SGNN_FORCE_SCALAR=1 in the environment pins the scalar table. All matrices are
// row-major and every output is accumulated into (callers zero it first).

#include <cstddef>
#include <cstdint>

namespace sgnn::kernels {

struct KernelTable {
  const char* name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // c[m x n] += a[m x k] * b[k x n]
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n);
  // c[m x n] += a[m x k] * b[n x k]^T
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n);
  // c[k x n] += a[m x k]^T * b[m x n]
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n);
  // y[rows x n] += S * x, S in CSR form
  void (*csr_mm)(const std::size_t* offsets, const std::uint32_t* indices, const double* values,
                 std::size_t rows, const double* x, double* y, std::size_t n);
  // y[cols x n] += S^T * x, S in CSR form with `rows` rows
  void (*csr_tmm)(const std::size_t* offsets, const std::uint32_t* indices, const double* values,
                  std::size_t rows, const double* x, double* y, std::size_t n);
};

const KernelTable& scalar();

// nullptr when the variant was not compiled in or the CPU lacks AVX2+FMA.
const KernelTable* avx2();

// Table used by the rest of the library.
const KernelTable& active();

}  // namespace sgnn::kernels
