#pragma once

// Structural-complexity counts, closed-form generalization-gap evaluators and
// aggregation-usage metrics.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sgnn/models.hpp"
#include "sgnn/tensor.hpp"

namespace sgnn {

inline constexpr double kDefaultTau = 1e-2;
inline constexpr double kDefaultDelta = 0.1;
inline const double kDefaultLossLipschitz = std::sqrt(2.0);

struct BoundInputs {
  double L = kDefaultLossLipschitz;  // loss Lipschitz constant
  double B = 1.0;                    // max input row norm
  double R0 = 1.0;                   // GT value projections
  double R1 = 1.0;                   // first weight matrix (GT: FFN input)
  double R2 = 1.0;                   // second weight matrix (GT: FFN output)
  double R_tilde = 1.0;              // GT output projection
  double pi_norm = 1.0;              // normalization Lipschitz constant
  std::size_t m = 1;                 // labeled nodes
  std::size_t n = 1;                 // all nodes
  double delta = kDefaultDelta;
  std::size_t heads = 1;

  // Throws ValidationError unless all constants are positive, delta is in
  // (0, 1) and m <= n.
  void validate() const;
};

// sqrt(2 ln(2/delta) / n)
double confidence_term(const BoundInputs& bi);

// Gap terms (excluding empirical risk). Each validates its inputs.
double bound_gcn(const BoundInputs& bi, double eta);
// Variant with sqrt(eta) in place of eta, following the norm chain used in the
// derivation (||A||_2 <= ||A||_inf sqrt(||A||_0), ||A||_inf <= 1).
double bound_gcn_sqrt(const BoundInputs& bi, double eta);
double bound_gat(const BoundInputs& bi, double eta1, double eta2);
double bound_gat_multihead(const BoundInputs& bi, double eta_mh1, double eta_mh2);
double bound_gt(const BoundInputs& bi, double eta_mh1);

std::size_t eta_fixed(const SparseMatrix& a_hat, double eps = 0.0);
// Entries with value >= tau. tau <= 0 throws ValidationError.
std::size_t eta_thresholded(const SparseMatrix& attention, double tau);
std::size_t eta_multihead(std::span<const SparseMatrix> heads, double tau);

// Share of off-diagonal stored entries with weight >= tau (0 without any).
double effective_edge_ratio(const SparseMatrix& omega, double tau);
// Off-diagonal weight between nodes of different classes over all
// off-diagonal weight (0 when there is none).
double cross_class_ratio(const SparseMatrix& omega, std::span<const int> classes);

// Ground-truth labels on train nodes, predictions elsewhere.
std::vector<int> node_classes(std::span<const int> labels, std::span<const std::uint8_t> train_mask,
                              std::span<const int> predictions);

// |test error - train error|
double generalization_gap(double train_error, double test_error);

// Largest row norm of a feature matrix.
double max_row_norm(const DenseMatrix& x);
double max_row_norm(const SparseMatrix& x);

struct BoundSettings {
  double tau = kDefaultTau;
  double delta = kDefaultDelta;
  double lipschitz = kDefaultLossLipschitz;
};

// Measures the bound constants of a model: spectral norms of the relevant
// weights, B from the features entering the first aggregation, and for GT the
// largest LayerNorm Jacobian norm over sampled rows of layer 1. Zero norms are
// clamped to 1e-12. `rec` must come from an evaluation forward of `model`.
BoundInputs empirical_bound_inputs(const Model& model, const GraphContext& ctx,
                                   const ForwardRecord& rec, std::size_t labeled,
                                   const BoundSettings& settings = {});

// Spectral norm of the LayerNorm Jacobian at input row x with the given gain.
double layer_norm_jacobian_norm(std::span<const double> x, std::span<const double> gain,
                                double eps = 1e-5);

struct ComplexityReport {
  double tau = kDefaultTau;
  std::size_t eta = 0;                            // nonzeros of A_hat
  std::vector<std::vector<std::size_t>> eta_tau;  // per layer, per head
  std::vector<std::size_t> eta_mh;                // per layer, summed over heads
  std::vector<double> effective_edge_ratio;       // per layer (head mean)
  std::vector<double> cross_class_ratio;          // per layer (head mean)
};

ComplexityReport complexity_report(const ForwardRecord& rec, const GraphContext& ctx,
                                   std::span<const int> classes, double tau = kDefaultTau);

struct NamedBound {
  std::string name;
  double gap = 0.0;
};

struct BoundReport {
  BoundInputs inputs;
  ComplexityReport complexity;
  std::vector<NamedBound> bounds;
};

// Bounds that apply to the model's architecture: GCN (as stated and the sqrt
// variant), GAT (head-mean and multi-head counts), GT (layer-1 multi-head count).
BoundReport evaluate_bounds(const Model& model, const GraphContext& ctx, const ForwardRecord& rec,
                            std::span<const int> classes, std::size_t labeled,
                            const BoundSettings& settings = {});

}  // namespace sgnn
