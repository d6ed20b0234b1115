#include "sgnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sgnn/errors.hpp"
#include "sgnn/kernels.hpp"

namespace sgnn {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

void require_shape(bool ok, const char* op, std::size_t ar, std::size_t ac, std::size_t br,
                   std::size_t bc) {
  if (!ok) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(ar, ac) + " and " +
                     shape_str(br, bc));
  }
}

}  // namespace

// ---------------------------------------------------------------- DenseMatrix

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("DenseMatrix: data length " + std::to_string(data_.size()) +
                     " does not match " + shape_str(rows, cols));
  }
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("DenseMatrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::column(std::span<const double> values) {
  return DenseMatrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

void DenseMatrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool DenseMatrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DenseMatrix DenseMatrix::transposed() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

DenseMatrix& DenseMatrix::operator+=(const DenseMatrix& o) {
  require_shape(same_shape(o), "add", rows_, cols_, o.rows_, o.cols_);
  kernels::active().axpy(1.0, o.data(), data(), data_.size());
  return *this;
}

DenseMatrix& DenseMatrix::operator-=(const DenseMatrix& o) {
  require_shape(same_shape(o), "sub", rows_, cols_, o.rows_, o.cols_);
  kernels::active().axpy(-1.0, o.data(), data(), data_.size());
  return *this;
}

DenseMatrix& DenseMatrix::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
DenseMatrix operator*(DenseMatrix a, double s) { return a *= s; }

// --------------------------------------------------------------- SparseMatrix

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), offsets_(rows + 1, 0) {}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> offsets,
                           std::vector<std::uint32_t> indices, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      offsets_(std::move(offsets)),
      indices_(std::move(indices)),
      values_(std::move(values)) {
  if (offsets_.size() != rows_ + 1 || offsets_.front() != 0) {
    throw ValidationError("SparseMatrix: offsets must have rows+1 entries starting at 0");
  }
  if (offsets_.back() != indices_.size() || indices_.size() != values_.size()) {
    throw ValidationError("SparseMatrix: nnz does not match last row offset");
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    if (offsets_[r + 1] < offsets_[r]) throw ValidationError("SparseMatrix: offsets decrease");
    for (std::size_t e = offsets_[r]; e < offsets_[r + 1]; ++e) {
      if (indices_[e] >= cols_) throw ValidationError("SparseMatrix: column index out of range");
      if (e > offsets_[r] && indices_[e] <= indices_[e - 1]) {
        throw ValidationError("SparseMatrix: column indices not strictly increasing in row " +
                              std::to_string(r));
      }
    }
  }
}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                         std::vector<Triplet> triplets) {
  for (const auto& t : triplets) {
    if (t.row >= rows || t.col >= cols) throw ValidationError("triplet out of range");
  }
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<std::size_t> offsets(rows + 1, 0);
  std::vector<std::uint32_t> indices;
  std::vector<double> values;
  indices.reserve(triplets.size());
  values.reserve(triplets.size());
  std::size_t last_row = rows;
  std::size_t last_col = cols;
  for (const auto& t : triplets) {
    if (t.row == last_row && t.col == last_col) {
      values.back() += t.value;
      continue;
    }
    indices.push_back(static_cast<std::uint32_t>(t.col));
    values.push_back(t.value);
    ++offsets[t.row + 1];
    last_row = t.row;
    last_col = t.col;
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  return SparseMatrix(rows, cols, std::move(offsets), std::move(indices), std::move(values));
}

SparseMatrix SparseMatrix::from_dense(const DenseMatrix& d, double drop_tol) {
  std::vector<std::size_t> offsets(d.rows() + 1, 0);
  std::vector<std::uint32_t> indices;
  std::vector<double> values;
  for (std::size_t r = 0; r < d.rows(); ++r) {
    for (std::size_t c = 0; c < d.cols(); ++c) {
      if (std::abs(d(r, c)) > drop_tol) {
        indices.push_back(static_cast<std::uint32_t>(c));
        values.push_back(d(r, c));
      }
    }
    offsets[r + 1] = indices.size();
  }
  return SparseMatrix(d.rows(), d.cols(), std::move(offsets), std::move(indices),
                      std::move(values));
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  std::vector<std::size_t> offsets(n + 1);
  std::vector<std::uint32_t> indices(n);
  std::iota(offsets.begin(), offsets.end(), std::size_t{0});
  std::iota(indices.begin(), indices.end(), 0u);
  return SparseMatrix(n, n, std::move(offsets), std::move(indices), std::vector<double>(n, 1.0));
}

std::vector<std::uint32_t> SparseMatrix::row_of_entries() const {
  std::vector<std::uint32_t> rows(nnz());
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t e = offsets_[r]; e < offsets_[r + 1]; ++e) rows[e] = static_cast<std::uint32_t>(r);
  return rows;
}

std::ptrdiff_t SparseMatrix::find(std::size_t r, std::size_t c) const {
  if (r >= rows_) return -1;
  const auto first = indices_.begin() + static_cast<std::ptrdiff_t>(offsets_[r]);
  const auto last = indices_.begin() + static_cast<std::ptrdiff_t>(offsets_[r + 1]);
  const auto it = std::lower_bound(first, last, static_cast<std::uint32_t>(c));
  if (it == last || *it != c) return -1;
  return it - indices_.begin();
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  const auto pos = find(r, c);
  return pos < 0 ? 0.0 : values_[static_cast<std::size_t>(pos)];
}

SparseMatrix SparseMatrix::with_values(std::vector<double> values) const {
  if (values.size() != nnz()) throw ShapeError("with_values: value count does not match nnz");
  SparseMatrix out = *this;
  out.values_ = std::move(values);
  return out;
}

DenseMatrix SparseMatrix::to_dense() const {
  DenseMatrix d(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t e = offsets_[r]; e < offsets_[r + 1]; ++e) d(r, indices_[e]) = values_[e];
  return d;
}

SparseMatrix SparseMatrix::transposed() const {
  std::vector<std::size_t> offsets(cols_ + 1, 0);
  for (auto c : indices_) ++offsets[c + 1];
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
  std::vector<std::uint32_t> indices(nnz());
  std::vector<double> values(nnz());
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t e = offsets_[r]; e < offsets_[r + 1]; ++e) {
      const std::size_t pos = cursor[indices_[e]]++;
      indices[pos] = static_cast<std::uint32_t>(r);
      values[pos] = values_[e];
    }
  }
  return SparseMatrix(cols_, rows_, std::move(offsets), std::move(indices), std::move(values));
}

// ------------------------------------------------------------------ products

DenseMatrix spmm(const SparseMatrix& s, const DenseMatrix& d) {
  require_shape(s.cols() == d.rows(), "spmm", s.rows(), s.cols(), d.rows(), d.cols());
  DenseMatrix out(s.rows(), d.cols());
  kernels::active().csr_mm(s.offsets().data(), s.indices().data(), s.values().data(), s.rows(),
                           d.data(), out.data(), d.cols());
  return out;
}

DenseMatrix spmm_transposed(const SparseMatrix& s, const DenseMatrix& d) {
  require_shape(s.rows() == d.rows(), "spmm_transposed", s.rows(), s.cols(), d.rows(), d.cols());
  DenseMatrix out(s.cols(), d.cols());
  kernels::active().csr_tmm(s.offsets().data(), s.indices().data(), s.values().data(), s.rows(),
                            d.data(), out.data(), d.cols());
  return out;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  require_shape(a.cols() == b.rows(), "matmul", a.rows(), a.cols(), b.rows(), b.cols());
  DenseMatrix out(a.rows(), b.cols());
  kernels::active().gemm_nn(a.data(), b.data(), out.data(), a.rows(), a.cols(), b.cols());
  return out;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  require_shape(a.cols() == b.cols(), "matmul_nt", a.rows(), a.cols(), b.rows(), b.cols());
  DenseMatrix out(a.rows(), b.rows());
  kernels::active().gemm_nt(a.data(), b.data(), out.data(), a.rows(), a.cols(), b.rows());
  return out;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  require_shape(a.rows() == b.rows(), "matmul_tn", a.rows(), a.cols(), b.rows(), b.cols());
  DenseMatrix out(a.cols(), b.cols());
  kernels::active().gemm_tn(a.data(), b.data(), out.data(), a.rows(), a.cols(), b.cols());
  return out;
}

// --------------------------------------------------------------------- norms

double frobenius_norm(const DenseMatrix& m) {
  return std::sqrt(kernels::active().dot(m.data(), m.data(), m.size()));
}

double frobenius_norm(const SparseMatrix& m) {
  const auto& v = m.values();
  return std::sqrt(kernels::active().dot(v.data(), v.data(), v.size()));
}

double max_abs(const DenseMatrix& m) {
  double best = 0.0;
  for (double v : m.values()) best = std::max(best, std::abs(v));
  return best;
}

double max_abs(const SparseMatrix& m) {
  double best = 0.0;
  for (double v : m.values()) best = std::max(best, std::abs(v));
  return best;
}

std::size_t l0_count(const SparseMatrix& m, double eps) {
  if (eps < 0.0) throw ValidationError("l0_count: eps must be nonnegative");
  return static_cast<std::size_t>(std::count_if(m.values().begin(), m.values().end(),
                                                [eps](double v) { return std::abs(v) > eps; }));
}

double trace_inner(const DenseMatrix& a, const DenseMatrix& b) {
  require_shape(a.same_shape(b), "trace_inner", a.rows(), a.cols(), b.rows(), b.cols());
  return kernels::active().dot(a.data(), b.data(), a.size());
}

namespace {

template <class Apply, class ApplyT>
SpectralNormEstimate power_iteration(std::size_t n, Apply&& apply, ApplyT&& apply_t,
                                     std::size_t iters, double tol) {
  SpectralNormEstimate est;
  if (n == 0) throw ValidationError("spectral_norm: empty matrix");
  DenseMatrix v(n, 1, 1.0 / std::sqrt(static_cast<double>(n)));
  double prev = -1.0;
  for (std::size_t it = 1; it <= iters; ++it) {
    DenseMatrix mv = apply(v);
    const double sigma_sq = trace_inner(mv, mv);  // Rayleigh quotient of m^T m at unit v
    DenseMatrix w = apply_t(mv);
    const double wn = frobenius_norm(w);
    est.value = std::sqrt(sigma_sq);
    est.iterations = it;
    if (wn == 0.0) {
      est.converged = true;
      return est;
    }
    if (prev >= 0.0 && std::abs(est.value - prev) <= tol * std::max(1.0, est.value)) {
      est.converged = true;
      return est;
    }
    prev = est.value;
    v = w * (1.0 / wn);
  }
  return est;
}

}  // namespace

SpectralNormEstimate spectral_norm(const DenseMatrix& m, std::size_t iters, double tol) {
  if (m.empty()) throw ValidationError("spectral_norm: empty matrix");
  return power_iteration(
      m.cols(), [&](const DenseMatrix& v) { return matmul(m, v); },
      [&](const DenseMatrix& v) { return matmul_tn(m, v); }, iters, tol);
}

SpectralNormEstimate spectral_norm(const SparseMatrix& m, std::size_t iters, double tol) {
  if (m.rows() == 0 || m.cols() == 0) throw ValidationError("spectral_norm: empty matrix");
  return power_iteration(
      m.cols(), [&](const DenseMatrix& v) { return spmm(m, v); },
      [&](const DenseMatrix& v) { return spmm_transposed(m, v); }, iters, tol);
}

// ------------------------------------------------------------------- eigh

Eigendecomposition jacobi_eigh(const DenseMatrix& m, double tol) {
  const std::size_t n = m.rows();
  if (m.cols() != n) throw ShapeError("jacobi_eigh: matrix must be square");
  if (n > kMaxEigenDim) {
    throw SizeError("jacobi_eigh: " + std::to_string(n) + " rows exceeds the limit of " +
                    std::to_string(kMaxEigenDim));
  }
  const double scale = std::max(1.0, max_abs(m));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (std::abs(m(i, j) - m(j, i)) > 1e-12 * scale)
        throw ValidationError("jacobi_eigh: matrix is not symmetric");

  DenseMatrix a = m;
  DenseMatrix v = DenseMatrix::identity(n);
  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(s);
  };
  const double target = tol * std::max(1.0, frobenius_norm(m));

  for (int sweep = 0; sweep < 100 && off_norm() > target; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });
  Eigendecomposition out;
  out.values.resize(n);
  out.vectors = DenseMatrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
  }
  return out;
}

}  // namespace sgnn
