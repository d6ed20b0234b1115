#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape records operations in execution order; each recorded node keeps its
// forward value and a closure that pushes its output gradient to its parents.
// backward() zeroes every gradient, seeds the scalar loss with 1 and visits the
// nodes once in reverse recording order. A Tape is single-threaded.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "sgnn/tensor.hpp"

namespace sgnn::ad {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the Tape lives.
class Var {
 public:
  Var() = default;

  const DenseMatrix& value() const;
  const DenseMatrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;
  // Scalar value of a 1x1 node.
  double item() const;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const DenseMatrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Trainable input: gradients are accumulated for it.
  Var leaf(DenseMatrix value);
  // Input excluded from differentiation.
  Var constant(DenseMatrix value);

  // Records an op output. The node requires grad when any parent does; in that
  // case `fn` runs during backward with this node's gradient.
  Var record(DenseMatrix value, std::span<const Var> parents, BackwardFn fn);

  // Populates grad() of every node that requires grad with d(loss)/d(node).
  // Throws StateError for an empty tape, a foreign Var or a non-scalar loss.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

  // For BackwardFn implementations.
  bool needs_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }
  DenseMatrix& grad_of(const Var& v) { return nodes_[v.id()].grad; }

 private:
  friend class Var;
  struct Node {
    DenseMatrix value;
    DenseMatrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

using SparsePtr = std::shared_ptr<const SparseMatrix>;
using IndexPtr = std::shared_ptr<const std::vector<std::int64_t>>;

// ---- dense algebra
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a b^T

// Elementwise with broadcasting of b over a: b may match a, be 1x1, 1xcols
// (row vector) or rowsx1 (column vector).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var one_minus(Var a);

// ---- activations
Var relu(Var a);  // subgradient 0 at 0
Var leaky_relu(Var a, double slope);
Var sigmoid(Var a);
// Natural log; inputs are clamped below at 1e-300.
Var log(Var a);

// ---- normalization
Var row_softmax(Var a);
// Softmax over entries where mask != 0; masked entries are exactly 0. Every row
// needs at least one active entry (ValidationError otherwise).
Var masked_row_softmax(Var a, const DenseMatrix& mask);
// Per-row layer normalization with learnable gain/bias (both 1 x cols).
Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);

// ---- shape
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var reshape(Var a, std::size_t rows, std::size_t cols);
Var sum(Var a);      // 1x1
Var col_sum(Var a);  // 1 x cols
Var detach(Var a);

// ---- sparse / edge ops. Edge vectors are nnz x k in the pattern's storage order.
// s * x with s constant.
Var spmm(const SparsePtr& s, Var x);
// S(values) * x where S has the pattern's structure and the given nnz x 1 values.
Var spmm_values(const SparsePtr& pattern, Var values, Var x);
// out_e = <q[row(e)], k[col(e)]>
Var edge_dot(const SparsePtr& pattern, Var q, Var k);
// Softmax of nnz x 1 scores within each pattern row.
Var edge_softmax(const SparsePtr& pattern, Var scores);
// out.row(i) = a.row(idx[i]), or zeros when idx[i] < 0.
Var gather_rows(Var a, const IndexPtr& idx);
// out.row(s) = sum of a.row(i) over i with segment[i] == s.
Var segment_sum(Var a, const IndexPtr& segment, std::size_t segments);

// ---- regularization / loss
// Inverted dropout: kept entries are scaled by 1/(1-rate). Identity when
// rate == 0 or !training.
Var dropout(Var a, double rate, std::mt19937_64& rng, bool training);
// Mean softmax cross-entropy over rows with mask[i] != 0.
Var cross_entropy_with_logits(Var logits, std::span<const int> labels,
                              std::span<const std::uint8_t> mask);

}  // namespace sgnn::ad
