#pragma once

// Loop nests shared by every kernel variant. Each variant's translation unit
// instantiates these with its own Prim policy (static dot/axpy) and is compiled
// with the matching target flags, so only the primitives differ between tables.
// Include only from kernels_*.cpp, inside an anonymous namespace.

#include <cstddef>
#include <cstdint>

template <class Prim>
void gemm_nn_impl(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = arow[p];
      if (s != 0.0) Prim::axpy(s, b + p * n, crow, n);
    }
  }
}

template <class Prim>
void gemm_nt_impl(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += Prim::dot(arow, b + j * k, k);
  }
}

template <class Prim>
void gemm_tn_impl(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n) {
  for (std::size_t r = 0; r < m; ++r) {
    const double* arow = a + r * k;
    const double* brow = b + r * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = arow[p];
      if (s != 0.0) Prim::axpy(s, brow, c + p * n, n);
    }
  }
}

template <class Prim>
void csr_mm_impl(const std::size_t* offsets, const std::uint32_t* indices, const double* values,
                 std::size_t rows, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < rows; ++i) {
    double* yrow = y + i * n;
    for (std::size_t e = offsets[i]; e < offsets[i + 1]; ++e) {
      Prim::axpy(values[e], x + static_cast<std::size_t>(indices[e]) * n, yrow, n);
    }
  }
}

template <class Prim>
void csr_tmm_impl(const std::size_t* offsets, const std::uint32_t* indices, const double* values,
                  std::size_t rows, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xrow = x + i * n;
    for (std::size_t e = offsets[i]; e < offsets[i + 1]; ++e) {
      Prim::axpy(values[e], xrow, y + static_cast<std::size_t>(indices[e]) * n, n);
    }
  }
}
