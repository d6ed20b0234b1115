#include "sgnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "sgnn/errors.hpp"
#include "sgnn/ser.hpp"

namespace sgnn {

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::NoClassTree: return "no-class-tree";
    case Ablation::NoEdgeControl: return "no-edge-control";
  }
  return "?";
}

Ablation parse_ablation(std::string_view s) {
  if (s == "none") return Ablation::None;
  if (s == "no-class-tree") return Ablation::NoClassTree;
  if (s == "no-edge-control") return Ablation::NoEdgeControl;
  throw ValidationError("unknown ablation '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !(weight_decay >= 0.0) || !(mask_lr_scale >= 0.0)) {
    throw ValidationError("train config: rates must be nonnegative");
  }
  if (!(lambda >= 0.0)) throw ValidationError("train config: lambda must be nonnegative");
  if (epochs == 0) throw ValidationError("train config: epochs must be at least 1");
  if (!(tau > 0.0)) throw ValidationError("train config: tau must be positive");
  if (model.dropout < 0.0 || model.dropout >= 1.0) {
    throw ValidationError("train config: dropout must lie in [0, 1)");
  }
}

// ---------------------------------------------------------------- splits

Masks make_splits(const Graph& g, std::size_t labeled_per_class, std::size_t n_val,
                  std::size_t n_test, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> by_class(g.num_classes);
  for (std::size_t i = 0; i < g.n; ++i) by_class[static_cast<std::size_t>(g.labels[i])].push_back(i);

  Masks m;
  m.train.assign(g.n, 0);
  m.val.assign(g.n, 0);
  m.test.assign(g.n, 0);
  for (std::size_t c = 0; c < g.num_classes; ++c) {
    auto& nodes = by_class[c];
    if (nodes.size() < labeled_per_class) {
      throw ValidationError("make_splits: class " + std::to_string(c) + " has " +
                            std::to_string(nodes.size()) + " nodes, fewer than " +
                            std::to_string(labeled_per_class) + " labeled per class");
    }
    std::shuffle(nodes.begin(), nodes.end(), rng);
    for (std::size_t k = 0; k < labeled_per_class; ++k) m.train[nodes[k]] = 1;
  }
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < g.n; ++i)
    if (!m.train[i]) rest.push_back(i);
  if (rest.size() < n_val + n_test) {
    throw ValidationError("make_splits: " + std::to_string(rest.size()) +
                          " unlabeled nodes cannot hold " + std::to_string(n_val) + " validation and " +
                          std::to_string(n_test) + " test nodes");
  }
  std::shuffle(rest.begin(), rest.end(), rng);
  for (std::size_t k = 0; k < n_val; ++k) m.val[rest[k]] = 1;
  for (std::size_t k = 0; k < n_test; ++k) m.test[rest[n_val + k]] = 1;
  return m;
}

void apply_masks(Graph& g, Masks masks) {
  g.train_mask = std::move(masks.train);
  g.val_mask = std::move(masks.val);
  g.test_mask = std::move(masks.test);
  g.validate();
}

// ------------------------------------------------------------------ adam

void adam_step(std::span<const OptimParam> params, std::span<const DenseMatrix> grads,
               AdamState& state, const AdamSettings& s) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: params/grads count mismatch");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value->rows(), p.value->cols());
      state.v.emplace_back(p.value->rows(), p.value->cols());
    }
  }
  if (state.m.size() != params.size()) throw StateError("adam_step: optimizer state size changed");
  ++state.step;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].value->values();
    const auto& g = grads[i].values();
    if (g.size() != w.size()) throw ShapeError("adam_step: gradient shape mismatch");
    auto& m = state.m[i].values();
    auto& v = state.v[i].values();
    const double lr = s.lr * params[i].lr_scale;
    const double shrink = params[i].decay ? 1.0 - lr * s.weight_decay : 1.0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = s.beta1 * m[k] + (1.0 - s.beta1) * g[k];
      v[k] = s.beta2 * v[k] + (1.0 - s.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w[k] = w[k] * shrink - lr * mhat / (std::sqrt(vhat) + s.eps);
    }
  }
}

// ------------------------------------------------------------ evaluation

Evaluation evaluate_logits(const DenseMatrix& logits, std::span<const int> labels,
                           std::span<const std::uint8_t> mask) {
  if (labels.size() != logits.rows() || mask.size() != logits.rows()) {
    throw ShapeError("evaluate: labels/mask length != logits rows");
  }
  const auto pred = argmax_rows(logits);
  std::size_t count = 0, correct = 0;
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (!mask[i]) continue;
    ++count;
    if (pred[i] == labels[i]) ++correct;
    auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    loss += std::log(z) + mx - row[static_cast<std::size_t>(labels[i])];
  }
  if (count == 0) throw ValidationError("evaluate: mask selects no nodes");
  return {static_cast<double>(correct) / static_cast<double>(count),
          loss / static_cast<double>(count)};
}

Evaluation evaluate(const Model& m, const GraphContext& ctx, const Graph& g,
                    std::span<const std::uint8_t> mask) {
  ad::Tape tape;
  const auto rec = evaluate_forward(m, ctx, tape);
  return evaluate_logits(rec.logits.value(), g.labels, mask);
}

namespace {

struct UsageMetrics {
  double effective = 0.0;
  double cross = 0.0;
  double cross_truth = 0.0;
};

UsageMetrics usage_metrics(const ForwardRecord& rec, const Graph& g, double tau) {
  const auto pred = argmax_rows(rec.logits.value());
  const auto classes = node_classes(g.labels, g.train_mask, pred);
  UsageMetrics u;
  const auto layers = static_cast<double>(rec.omega.size());
  for (std::size_t k = 0; k < rec.omega.size(); ++k) {
    const SparseMatrix om = rec.omega_matrix(k);
    u.effective += effective_edge_ratio(om, tau) / layers;
    u.cross += cross_class_ratio(om, classes) / layers;
    u.cross_truth += cross_class_ratio(om, g.labels) / layers;
  }
  return u;
}

EdgeWeights edge_weights(const ForwardRecord& rec, const GraphContext& ctx, std::size_t layer,
                         bool detach_values) {
  EdgeWeights w;
  w.pattern = rec.patterns[layer];
  const bool complete = ctx.complete && w.pattern == ctx.complete;
  w.row = complete ? ctx.complete_row : ctx.entry_row;
  w.col = complete ? ctx.complete_col : ctx.entry_col;
  w.values = detach_values ? ad::detach(rec.omega[layer]) : rec.omega[layer];
  return w;
}

}  // namespace

SnapshotMetrics snapshot_metrics(const Model& m, const GraphContext& ctx, const Graph& g, double tau) {
  ad::Tape tape;
  const auto rec = evaluate_forward(m, ctx, tape);
  const auto& logits = rec.logits.value();
  SnapshotMetrics s;
  s.train = evaluate_logits(logits, g.labels, g.train_mask);
  s.val = evaluate_logits(logits, g.labels, g.val_mask);
  s.test = evaluate_logits(logits, g.labels, g.test_mask);
  const auto u = usage_metrics(rec, g, tau);
  s.effective_edge_ratio = u.effective;
  s.cross_class_ratio = u.cross;
  s.cross_class_ratio_truth = u.cross_truth;
  s.generalization_gap = generalization_gap(1.0 - s.train.accuracy, 1.0 - s.test.accuracy);
  for (const auto& h : rec.hidden) s.dirichlet_energy.push_back(dirichlet_energy(*ctx.ops.l_tilde, h.value()));
  return s;
}

// ----------------------------------------------------------------- train

TrainResult train(const Graph& input, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  Graph g = input;
  if (!g.has_masks()) {
    apply_masks(g, make_splits(g, cfg.split.labeled_per_class, cfg.split.val, cfg.split.test, cfg.seed));
  }
  g.validate();

  const bool global = cfg.model.arch == Architecture::Gt && cfg.model.scope == AttentionScope::Global;
  const GraphContext ctx = make_context(g, global);
  std::mt19937_64 init_rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  Model model = init_model(cfg.model, g.feature_dim(), g.num_classes, g.edges.size(), init_rng);

  const auto refs = parameters(model);
  std::vector<OptimParam> optim;
  for (const auto& r : refs) {
    const bool is_mask = r.name == "gcn.mask_logits";
    optim.push_back({r.value, r.decay, is_mask ? cfg.mask_lr_scale : 1.0});
  }
  const AdamSettings adam{cfg.lr, cfg.weight_decay};
  AdamState state;

  TrainResult result;
  result.model = model;
  result.masks = {g.train_mask, g.val_mask, g.test_mask};
  double best_val = -1.0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord er;
    er.epoch = epoch;
    {
      ad::Tape tape;
      const auto rec = forward(model, ctx, true, tape, dropout_rng);
      ad::Var ce = ad::cross_entropy_with_logits(rec.logits, g.labels, g.train_mask);
      std::vector<ad::Var> se;
      er.warmup = cfg.ser_active() ? warmup_factor(epoch, cfg.warmup_epochs) : 0.0;
      if (cfg.ser_active()) {
        // Without edge control the posterior is the only path left for the term.
        const bool detach = cfg.ablation == Ablation::NoEdgeControl;
        const auto assignment = build_class_assignment(g.labels, g.train_mask, rec.logits,
                                                       cfg.stop_gradient_posterior && !detach);
        for (std::size_t k = 0; k < rec.omega.size(); ++k) {
          const auto w = edge_weights(rec, ctx, k, detach);
          se.push_back(cfg.ablation == Ablation::NoClassTree ? singleton_structural_entropy_loss(w)
                                                             : structural_entropy_loss(w, assignment.p));
          er.se_loss.push_back(se.back().item());
        }
      }
      ad::Var total = total_loss(ce, se, cfg.lambda, er.warmup);
      er.ce_loss = ce.item();
      er.total_loss = total.item();
      if (!std::isfinite(er.total_loss)) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                              ": loss is not finite (ce " + std::to_string(er.ce_loss) + ")");
      }
      tape.backward(total);
      std::vector<DenseMatrix> grads;
      grads.reserve(rec.params.size());
      for (const auto& p : rec.params) grads.push_back(p.grad());
      adam_step(optim, grads, state, adam);
    }

    ad::Tape eval_tape;
    const auto rec = evaluate_forward(model, ctx, eval_tape);
    const auto& logits = rec.logits.value();
    if (!logits.all_finite()) {
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                            ": non-finite logits");
    }
    er.train_acc = evaluate_logits(logits, g.labels, g.train_mask).accuracy;
    er.val_acc = evaluate_logits(logits, g.labels, g.val_mask).accuracy;
    er.test_acc = evaluate_logits(logits, g.labels, g.test_mask).accuracy;
    const auto u = usage_metrics(rec, g, cfg.tau);
    er.effective_edge_ratio = u.effective;
    er.cross_class_ratio = u.cross;
    er.generalization_gap = generalization_gap(1.0 - er.train_acc, 1.0 - er.test_acc);
    result.history.push_back(er);
    if (on_epoch) on_epoch(er);

    if (er.val_acc > best_val) {
      best_val = er.val_acc;
      result.best_epoch = epoch;
      result.model = model;
      since_best = 0;
    } else if (++since_best > cfg.patience) {
      break;
    }
  }
  result.final = snapshot_metrics(result.model, ctx, g, cfg.tau);
  return result;
}

}  // namespace sgnn
