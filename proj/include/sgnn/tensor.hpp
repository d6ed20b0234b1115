#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace sgnn {

// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);
  static DenseMatrix column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  void fill(double v);
  bool same_shape(const DenseMatrix& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  bool all_finite() const noexcept;

  DenseMatrix transposed() const;

  DenseMatrix& operator+=(const DenseMatrix& o);
  DenseMatrix& operator-=(const DenseMatrix& o);
  DenseMatrix& operator*=(double s);

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator*(DenseMatrix a, double s);

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

// Compressed sparse row matrix. Column indices are strictly increasing within a
// row; entries may store explicit zeros.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols);
  // Validates the CSR invariants.
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> offsets,
               std::vector<std::uint32_t> indices, std::vector<double> values);

  // Duplicate coordinates are summed.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<Triplet> triplets);
  // Keeps entries with |value| > drop_tol.
  static SparseMatrix from_dense(const DenseMatrix& d, double drop_tol = 0.0);
  static SparseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  const std::vector<std::size_t>& offsets() const noexcept { return offsets_; }
  const std::vector<std::uint32_t>& indices() const noexcept { return indices_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }

  // Row index of each stored entry, in storage order.
  std::vector<std::uint32_t> row_of_entries() const;
  // Stored value at (r, c), or 0 when absent.
  double at(std::size_t r, std::size_t c) const;
  // Storage position of (r, c), or -1 when absent.
  std::ptrdiff_t find(std::size_t r, std::size_t c) const;

  // Same sparsity pattern, new values.
  SparseMatrix with_values(std::vector<double> values) const;

  DenseMatrix to_dense() const;
  SparseMatrix transposed() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::uint32_t> indices_;
  std::vector<double> values_;
};

// Products. All throw ShapeError on mismatched inner dimensions.
DenseMatrix spmm(const SparseMatrix& s, const DenseMatrix& d);
DenseMatrix spmm_transposed(const SparseMatrix& s, const DenseMatrix& d);  // s^T d
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);  // a b^T
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);  // a^T b

double frobenius_norm(const DenseMatrix& m);
double frobenius_norm(const SparseMatrix& m);
// Largest absolute entry (entrywise infinity norm).
double max_abs(const DenseMatrix& m);
double max_abs(const SparseMatrix& m);
// Number of stored entries with |value| > eps.
std::size_t l0_count(const SparseMatrix& m, double eps = 0.0);
// Frobenius inner product tr(a^T b).
double trace_inner(const DenseMatrix& a, const DenseMatrix& b);

struct SpectralNormEstimate {
  double value = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
};

// Largest singular value by power iteration on m^T m, started from the
// normalized all-ones vector. Stops when successive estimates differ by less
// than tol (relative).
SpectralNormEstimate spectral_norm(const DenseMatrix& m, std::size_t iters = 1000,
                                   double tol = 1e-12);
SpectralNormEstimate spectral_norm(const SparseMatrix& m, std::size_t iters = 1000,
                                   double tol = 1e-12);

struct Eigendecomposition {
  std::vector<double> values;  // ascending
  DenseMatrix vectors;         // column i pairs with values[i]
};

inline constexpr std::size_t kMaxEigenDim = 512;

// Cyclic Jacobi rotations for symmetric matrices. Throws ValidationError on
// asymmetric input, SizeError above kMaxEigenDim rows.
Eigendecomposition jacobi_eigh(const DenseMatrix& m, double tol = 1e-12);

}  // namespace sgnn
