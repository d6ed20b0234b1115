#pragma once

// Class-level structural entropy over a three-level encoding tree (root, class
// subsets given softly by an assignment matrix P, nodes) and the regularized
// training objective.

#include <cstdint>
#include <span>
#include <vector>

#include "sgnn/autodiff.hpp"
#include "sgnn/tensor.hpp"

namespace sgnn {

struct ClassAssignment {
  ad::Var p;                          // n x c
  std::vector<std::uint8_t> labeled;  // 1 where the row is a ground-truth one-hot
};

// One-hot rows for train-mask nodes, softmax(logits) elsewhere. Gradients reach
// `logits` through the posterior rows unless stop_gradient is set.
ClassAssignment build_class_assignment(std::span<const int> labels,
                                       std::span<const std::uint8_t> train_mask, ad::Var logits,
                                       bool stop_gradient = false);

// Edge-vector description of an aggregation matrix: values are nnz x 1 in the
// storage order of `pattern`; row/col give each entry's coordinates.
struct EdgeWeights {
  ad::SparsePtr pattern;
  ad::IndexPtr row;
  ad::IndexPtr col;
  ad::Var values;
};

// -sum_j (g_j / vol(V)) ln(vol(C_j) / vol(V)). Classes with zero volume
// contribute 0. Throws ValidationError when vol(V) <= 0.
ad::Var structural_entropy_loss(const EdgeWeights& omega, ad::Var p);

// Same objective with every node in its own class (P = I):
// -sum_v ((d_v - w_vv) / vol(V)) ln(d_v / vol(V)).
ad::Var singleton_structural_entropy_loss(const EdgeWeights& omega);

// ce + warmup * lambda * sum(se). Returns `ce` unchanged when the
// regularizer is inactive (lambda == 0, warmup == 0 or no terms).
ad::Var total_loss(ad::Var ce, std::span<const ad::Var> se, double lambda, double warmup);

// min(1, epoch / warmup_epochs); 1 when warmup_epochs == 0.
double warmup_factor(std::size_t epoch, std::size_t warmup_epochs);

struct EncodingTreeStats {
  std::vector<double> degrees;       // d_v
  double volume = 0.0;               // vol(V)
  std::vector<double> class_volume;  // vol(C_j)
  std::vector<double> cut;           // g_j
  double entropy = 0.0;              // loss value
};

// Plain-value evaluation for diagnostics and logging.
EncodingTreeStats encoding_tree_stats(const SparseMatrix& omega, const DenseMatrix& p);

}  // namespace sgnn
