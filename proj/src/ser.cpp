#include "sgnn/ser.hpp"

#include <cmath>
#include <memory>

#include "sgnn/errors.hpp"

namespace sgnn {

ClassAssignment build_class_assignment(std::span<const int> labels,
                                       std::span<const std::uint8_t> train_mask, ad::Var logits,
                                       bool stop_gradient) {
  const std::size_t n = logits.rows();
  const std::size_t c = logits.cols();
  if (labels.size() != n || train_mask.size() != n) {
    throw ShapeError("build_class_assignment: labels/mask length != logits rows");
  }
  ad::Tape& tape = *logits.tape();
  DenseMatrix onehot(n, c);
  DenseMatrix free_rows(n, 1);
  ClassAssignment out;
  out.labeled.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (train_mask[i]) {
      if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
        throw ValidationError("build_class_assignment: label out of range");
      }
      onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
      out.labeled[i] = 1;
    } else {
      free_rows(i, 0) = 1.0;
    }
  }
  ad::Var src = stop_gradient ? ad::detach(logits) : logits;
  ad::Var posterior = ad::mul(ad::row_softmax(src), tape.constant(std::move(free_rows)));
  out.p = ad::add(posterior, tape.constant(std::move(onehot)));
  return out;
}

namespace {

void check_volume(const ad::Var& vol) {
  if (!(vol.item() > 0.0)) {
    throw ValidationError("structural entropy: aggregation matrix has no positive mass");
  }
}

}  // namespace

ad::Var structural_entropy_loss(const EdgeWeights& omega, ad::Var p) {
  const std::size_t n = omega.pattern->rows();
  if (p.rows() != n) throw ShapeError("structural_entropy_loss: P rows != node count");
  if (omega.values.rows() != omega.pattern->nnz() || omega.values.cols() != 1) {
    throw ShapeError("structural_entropy_loss: edge values must be nnz x 1");
  }
  ad::Var degrees = ad::segment_sum(omega.values, omega.row, n);
  ad::Var vol = ad::sum(degrees);
  check_volume(vol);
  ad::Var class_vol = ad::col_sum(ad::mul(p, degrees));
  ad::Var p_row = ad::gather_rows(p, omega.row);
  ad::Var p_col = ad::gather_rows(p, omega.col);
  ad::Var cut = ad::col_sum(ad::mul(ad::mul(p_row, ad::one_minus(p_col)), omega.values));
  ad::Var terms = ad::mul(ad::div(cut, vol), ad::log(ad::div(class_vol, vol)));
  return ad::scale(ad::sum(terms), -1.0);
}

ad::Var singleton_structural_entropy_loss(const EdgeWeights& omega) {
  const std::size_t n = omega.pattern->rows();
  const std::size_t nnz = omega.pattern->nnz();
  ad::Tape& tape = *omega.values.tape();
  DenseMatrix off_diagonal(nnz, 1);
  for (std::size_t e = 0; e < nnz; ++e) {
    off_diagonal(e, 0) = (*omega.row)[e] != (*omega.col)[e] ? 1.0 : 0.0;
  }
  ad::Var degrees = ad::segment_sum(omega.values, omega.row, n);
  ad::Var vol = ad::sum(degrees);
  check_volume(vol);
  ad::Var cut = ad::segment_sum(ad::mul(omega.values, tape.constant(std::move(off_diagonal))),
                                omega.row, n);
  ad::Var terms = ad::mul(ad::div(cut, vol), ad::log(ad::div(degrees, vol)));
  return ad::scale(ad::sum(terms), -1.0);
}

ad::Var total_loss(ad::Var ce, std::span<const ad::Var> se, double lambda, double warmup) {
  if (lambda < 0.0) throw ValidationError("total_loss: lambda must be nonnegative");
  if (warmup < 0.0 || warmup > 1.0) throw ValidationError("total_loss: warmup must lie in [0, 1]");
  if (lambda == 0.0 || warmup == 0.0 || se.empty()) return ce;
  ad::Var acc = se.front();
  for (std::size_t i = 1; i < se.size(); ++i) acc = ad::add(acc, se[i]);
  return ad::add(ce, ad::scale(acc, lambda * warmup));
}

double warmup_factor(std::size_t epoch, std::size_t warmup_epochs) {
  if (warmup_epochs == 0) return 1.0;
  return std::min(1.0, static_cast<double>(epoch) / static_cast<double>(warmup_epochs));
}

EncodingTreeStats encoding_tree_stats(const SparseMatrix& omega, const DenseMatrix& p) {
  const std::size_t n = omega.rows();
  const std::size_t c = p.cols();
  if (p.rows() != n || omega.cols() != n) throw ShapeError("encoding_tree_stats: shape mismatch");
  EncodingTreeStats s;
  s.degrees.assign(n, 0.0);
  s.class_volume.assign(c, 0.0);
  s.cut.assign(c, 0.0);
  const auto& off = omega.offsets();
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t e = off[v]; e < off[v + 1]; ++e) {
      const double w = omega.values()[e];
      const std::size_t u = omega.indices()[e];
      s.degrees[v] += w;
      for (std::size_t j = 0; j < c; ++j) s.cut[j] += w * p(v, j) * (1.0 - p(u, j));
    }
    s.volume += s.degrees[v];
  }
  if (!(s.volume > 0.0)) throw ValidationError("encoding_tree_stats: no positive mass");
  for (std::size_t v = 0; v < n; ++v)
    for (std::size_t j = 0; j < c; ++j) s.class_volume[j] += p(v, j) * s.degrees[v];
  for (std::size_t j = 0; j < c; ++j) {
    if (s.class_volume[j] > 0.0) {
      s.entropy -= s.cut[j] / s.volume * std::log(s.class_volume[j] / s.volume);
    }
  }
  return s;
}

}  // namespace sgnn
