#include "sgnn/complexity.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sgnn/errors.hpp"

namespace sgnn {

void BoundInputs::validate() const {
  const double vals[] = {L, B, R0, R1, R2, R_tilde, pi_norm};
  for (double v : vals) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError("bound inputs: constants must be positive and finite");
    }
  }
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("bound inputs: delta must lie in (0, 1)");
  if (m == 0 || n == 0 || m > n) throw ValidationError("bound inputs: need 0 < m <= n");
  if (heads == 0) throw ValidationError("bound inputs: head count must be positive");
}

double confidence_term(const BoundInputs& bi) {
  return std::sqrt(2.0 * std::log(2.0 / bi.delta) / static_cast<double>(bi.n));
}

namespace {

void check_eta(double eta) {
  if (!(eta >= 0.0)) throw ValidationError("bound: structural counts must be nonnegative");
}

}  // namespace

double bound_gcn(const BoundInputs& bi, double eta) {
  bi.validate();
  check_eta(eta);
  const double sm = std::sqrt(static_cast<double>(bi.m));
  return 2.0 * bi.L * bi.R1 * bi.R2 * bi.B * eta / sm + confidence_term(bi);
}

double bound_gcn_sqrt(const BoundInputs& bi, double eta) {
  bi.validate();
  check_eta(eta);
  const double sm = std::sqrt(static_cast<double>(bi.m));
  return 2.0 * bi.L * bi.R1 * bi.R2 * bi.B * std::sqrt(eta) / sm + confidence_term(bi);
}

double bound_gat(const BoundInputs& bi, double eta1, double eta2) {
  bi.validate();
  check_eta(eta1);
  check_eta(eta2);
  return 2.0 * bi.L * bi.R1 * bi.R2 * bi.B * std::sqrt(eta1 * eta2 / static_cast<double>(bi.m)) +
         confidence_term(bi);
}

double bound_gat_multihead(const BoundInputs& bi, double eta_mh1, double eta_mh2) {
  bi.validate();
  check_eta(eta_mh1);
  check_eta(eta_mh2);
  const double denom = static_cast<double>(bi.m) * static_cast<double>(bi.heads);
  return 2.0 * bi.L * bi.R1 * bi.R2 * bi.B * std::sqrt(eta_mh1 * eta_mh2 / denom) +
         confidence_term(bi);
}

double bound_gt(const BoundInputs& bi, double eta_mh1) {
  bi.validate();
  check_eta(eta_mh1);
  const double lead = 8.0 * bi.pi_norm * bi.pi_norm * bi.L * bi.B * (1.0 + bi.R2 * bi.R1) /
                      std::sqrt(static_cast<double>(bi.m));
  const double structural =
      1.0 + bi.R0 * bi.R_tilde * std::sqrt(static_cast<double>(bi.heads) * eta_mh1);
  return lead * structural + confidence_term(bi);
}

// ---------------------------------------------------------------- counts

std::size_t eta_fixed(const SparseMatrix& a_hat, double eps) { return l0_count(a_hat, eps); }

std::size_t eta_thresholded(const SparseMatrix& attention, double tau) {
  if (!(tau > 0.0)) throw ValidationError("eta_thresholded: tau must be positive");
  return static_cast<std::size_t>(std::count_if(attention.values().begin(), attention.values().end(),
                                                [tau](double v) { return v >= tau; }));
}

std::size_t eta_multihead(std::span<const SparseMatrix> heads, double tau) {
  std::size_t total = 0;
  for (const auto& h : heads) total += eta_thresholded(h, tau);
  return total;
}

double effective_edge_ratio(const SparseMatrix& omega, double tau) {
  if (!(tau > 0.0)) throw ValidationError("effective_edge_ratio: tau must be positive");
  std::size_t candidates = 0, kept = 0;
  const auto& off = omega.offsets();
  for (std::size_t r = 0; r < omega.rows(); ++r) {
    for (std::size_t e = off[r]; e < off[r + 1]; ++e) {
      if (omega.indices()[e] == r) continue;
      ++candidates;
      if (omega.values()[e] >= tau) ++kept;
    }
  }
  return candidates == 0 ? 0.0 : static_cast<double>(kept) / static_cast<double>(candidates);
}

double cross_class_ratio(const SparseMatrix& omega, std::span<const int> classes) {
  if (classes.size() != omega.rows() || omega.rows() != omega.cols()) {
    throw ShapeError("cross_class_ratio: class vector does not match the aggregation matrix");
  }
  double total = 0.0, cross = 0.0;
  const auto& off = omega.offsets();
  for (std::size_t r = 0; r < omega.rows(); ++r) {
    for (std::size_t e = off[r]; e < off[r + 1]; ++e) {
      const std::size_t c = omega.indices()[e];
      if (c == r) continue;
      const double w = omega.values()[e];
      total += w;
      if (classes[r] != classes[c]) cross += w;
    }
  }
  return total > 0.0 ? cross / total : 0.0;
}

std::vector<int> node_classes(std::span<const int> labels, std::span<const std::uint8_t> train_mask,
                              std::span<const int> predictions) {
  if (labels.size() != predictions.size() || train_mask.size() != labels.size()) {
    throw ShapeError("node_classes: length mismatch");
  }
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = train_mask[i] ? labels[i] : predictions[i];
  return out;
}

double generalization_gap(double train_error, double test_error) {
  return std::abs(test_error - train_error);
}

double max_row_norm(const DenseMatrix& x) {
  double best = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (double v : x.row(r)) s += v * v;
    best = std::max(best, s);
  }
  return std::sqrt(best);
}

double max_row_norm(const SparseMatrix& x) {
  double best = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (std::size_t e = x.offsets()[r]; e < x.offsets()[r + 1]; ++e) s += x.values()[e] * x.values()[e];
    best = std::max(best, s);
  }
  return std::sqrt(best);
}

// -------------------------------------------------------- empirical inputs

double layer_norm_jacobian_norm(std::span<const double> x, std::span<const double> gain, double eps) {
  const std::size_t d = x.size();
  if (gain.size() != d || d == 0) throw ShapeError("layer_norm_jacobian_norm: width mismatch");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d);
  const double sigma = std::sqrt(var + eps);
  std::vector<double> xhat(d);
  for (std::size_t i = 0; i < d; ++i) xhat[i] = (x[i] - mean) / sigma;
  const double inv_d = 1.0 / static_cast<double>(d);
  DenseMatrix j(d, d);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) {
      j(a, b) = gain[a] / sigma * ((a == b ? 1.0 : 0.0) - inv_d - xhat[a] * xhat[b] * inv_d);
    }
  }
  return spectral_norm(j).value;
}

namespace {

constexpr double kNormFloor = 1e-12;
constexpr std::size_t kJacobianSamples = 64;

double norm_of(const DenseMatrix& m) {
  return std::max(kNormFloor, spectral_norm(m).value);
}

double max_head_norm(const std::vector<DenseMatrix>& ms) {
  double best = kNormFloor;
  for (const auto& m : ms) best = std::max(best, norm_of(m));
  return best;
}

double sampled_jacobian_norm(const DenseMatrix& inputs, const DenseMatrix& gain) {
  const std::size_t n = inputs.rows();
  const std::size_t samples = std::min(n, kJacobianSamples);
  double best = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t r = s * n / samples;
    best = std::max(best, layer_norm_jacobian_norm(inputs.row(r), gain.row(0)));
  }
  return best;
}

}  // namespace

BoundInputs empirical_bound_inputs(const Model& model, const GraphContext& ctx,
                                   const ForwardRecord& rec, std::size_t labeled,
                                   const BoundSettings& settings) {
  BoundInputs bi;
  bi.L = settings.lipschitz;
  bi.delta = settings.delta;
  bi.m = labeled;
  bi.n = ctx.ops.n();
  if (const auto* gcn = std::get_if<GcnModel>(&model.net)) {
    bi.B = max_row_norm(*ctx.features);
    bi.R1 = norm_of(gcn->w1);
    bi.R2 = norm_of(gcn->w2);
  } else if (const auto* gat = std::get_if<GatModel>(&model.net)) {
    bi.B = max_row_norm(*ctx.features);
    std::vector<DenseMatrix> w1, w2;
    for (const auto& h : gat->layer1) w1.push_back(h.weight);
    for (const auto& h : gat->layer2) w2.push_back(h.weight);
    bi.R1 = max_head_norm(w1);
    bi.R2 = max_head_norm(w2);
    bi.heads = gat->layer1.size();
  } else {
    const auto& gt = std::get<GtModel>(model.net);
    const auto& layer = gt.layers.front();
    // Layer 1 sees the projected features.
    bi.B = max_row_norm(spmm(*ctx.features, gt.embed));
    bi.R0 = max_head_norm(layer.value);
    bi.R_tilde = norm_of(layer.output);
    bi.R1 = norm_of(layer.ffn_in);
    bi.R2 = norm_of(layer.ffn_out);
    bi.heads = layer.value.size();
    if (rec.norm_inputs.empty()) throw StateError("empirical_bound_inputs: record has no norm inputs");
    const auto& [pre1, pre2] = rec.norm_inputs.front();
    bi.pi_norm = std::max({kNormFloor, sampled_jacobian_norm(pre1.value(), layer.norm1_gain),
                           sampled_jacobian_norm(pre2.value(), layer.norm2_gain)});
  }
  bi.B = std::max(bi.B, kNormFloor);
  bi.validate();
  return bi;
}

// ------------------------------------------------------------- reports

ComplexityReport complexity_report(const ForwardRecord& rec, const GraphContext& ctx,
                                   std::span<const int> classes, double tau) {
  ComplexityReport out;
  out.tau = tau;
  out.eta = eta_fixed(*ctx.ops.a_hat);
  for (std::size_t k = 0; k < rec.omega.size(); ++k) {
    std::vector<std::size_t> per_head;
    std::size_t total = 0;
    for (std::size_t h = 0; h < rec.omega_heads[k].size(); ++h) {
      per_head.push_back(eta_thresholded(rec.omega_head_matrix(k, h), tau));
      total += per_head.back();
    }
    out.eta_tau.push_back(std::move(per_head));
    out.eta_mh.push_back(total);
    const SparseMatrix omega = rec.omega_matrix(k);
    out.effective_edge_ratio.push_back(effective_edge_ratio(omega, tau));
    out.cross_class_ratio.push_back(cross_class_ratio(omega, classes));
  }
  return out;
}

BoundReport evaluate_bounds(const Model& model, const GraphContext& ctx, const ForwardRecord& rec,
                            std::span<const int> classes, std::size_t labeled,
                            const BoundSettings& settings) {
  BoundReport out;
  out.inputs = empirical_bound_inputs(model, ctx, rec, labeled, settings);
  out.complexity = complexity_report(rec, ctx, classes, settings.tau);
  const auto& bi = out.inputs;
  const auto& cx = out.complexity;
  switch (model.config.arch) {
    case Architecture::Gcn: {
      const auto eta = static_cast<double>(eta_fixed(rec.omega_matrix(0)));
      out.bounds.push_back({"gcn", bound_gcn(bi, eta)});
      out.bounds.push_back({"gcn_sqrt", bound_gcn_sqrt(bi, eta)});
      break;
    }
    case Architecture::Gat: {
      const auto e1 = static_cast<double>(eta_thresholded(rec.omega_matrix(0), settings.tau));
      const auto e2 = static_cast<double>(eta_thresholded(rec.omega_matrix(1), settings.tau));
      out.bounds.push_back({"gat", bound_gat(bi, e1, e2)});
      out.bounds.push_back({"gat_multihead", bound_gat_multihead(bi, static_cast<double>(cx.eta_mh[0]),
                                                                 static_cast<double>(cx.eta_mh[1]))});
      break;
    }
    case Architecture::Gt:
      out.bounds.push_back({"gt", bound_gt(bi, static_cast<double>(cx.eta_mh[0]))});
      break;
  }
  return out;
}

}  // namespace sgnn
