#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "sgnn/complexity.hpp"
#include "sgnn/graph.hpp"
#include "sgnn/models.hpp"

namespace sgnn {

// NoClassTree: every node is its own class in the structural term.
// NoEdgeControl: edge weights are constants in the structural term, which then
// acts only through the predicted class probabilities.
enum class Ablation { None, NoClassTree, NoEdgeControl };

std::string_view to_string(Ablation a);
Ablation parse_ablation(std::string_view s);

struct SplitSpec {
  std::size_t labeled_per_class = 20;
  std::size_t val = 500;
  std::size_t test = 1000;
};

struct TrainConfig {
  ModelConfig model;
  double lr = 0.01;
  double weight_decay = 5e-4;
  double mask_lr_scale = 3.0;  // learning-rate multiplier for edge mask logits
  std::size_t epochs = 300;
  std::size_t patience = 50;
  std::size_t warmup_epochs = 50;
  double lambda = 0.0;
  double tau = kDefaultTau;
  std::uint64_t seed = 0;
  SplitSpec split;
  Ablation ablation = Ablation::None;
  // Posterior rows of the class assignment are treated as constants in the
  // structural term.
  bool stop_gradient_posterior = true;

  bool ser_active() const { return lambda > 0.0; }
  // Throws ValidationError for out-of-range settings.
  void validate() const;
};

struct Masks {
  std::vector<std::uint8_t> train, val, test;
};

// Stratified: labeled_per_class train nodes per class, then n_val and n_test
// from the remaining nodes. Throws ValidationError when a class is too small or
// the remainder cannot hold both sets.
Masks make_splits(const Graph& g, std::size_t labeled_per_class, std::size_t n_val,
                  std::size_t n_test, std::uint64_t seed);
void apply_masks(Graph& g, Masks masks);

struct AdamSettings {
  double lr = 0.01;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<DenseMatrix> m, v;
  std::size_t step = 0;
};

struct OptimParam {
  DenseMatrix* value;
  bool decay = true;
  double lr_scale = 1.0;
};

// One Adam update with decoupled weight decay: p -= lr*wd*p, then the
// bias-corrected moment step. State is sized on first use.
void adam_step(std::span<const OptimParam> params, std::span<const DenseMatrix> grads,
               AdamState& state, const AdamSettings& settings);

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;  // mean cross-entropy
};

Evaluation evaluate_logits(const DenseMatrix& logits, std::span<const int> labels,
                           std::span<const std::uint8_t> mask);
// Throws ValidationError on an empty mask.
Evaluation evaluate(const Model& m, const GraphContext& ctx, const Graph& g,
                    std::span<const std::uint8_t> mask);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_acc = 0.0, val_acc = 0.0, test_acc = 0.0;
  double ce_loss = 0.0;
  double total_loss = 0.0;
  double warmup = 0.0;
  std::vector<double> se_loss;  // per layer; empty when SER is inactive
  double effective_edge_ratio = 0.0;
  double cross_class_ratio = 0.0;
  double generalization_gap = 0.0;
};

// Metrics of a model snapshot on a graph with masks.
struct SnapshotMetrics {
  Evaluation train, val, test;
  double effective_edge_ratio = 0.0;      // mean over layers
  double cross_class_ratio = 0.0;         // train labels + predictions, mean over layers
  double cross_class_ratio_truth = 0.0;   // ground-truth labels everywhere
  double generalization_gap = 0.0;        // |test error - train error|
  std::vector<double> dirichlet_energy;   // per hidden layer
};

SnapshotMetrics snapshot_metrics(const Model& m, const GraphContext& ctx, const Graph& g,
                                 double tau = kDefaultTau);

struct TrainResult {
  Model model;  // best-validation snapshot
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
  SnapshotMetrics final;
  Masks masks;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Masks present on the graph are used as given; otherwise they are drawn with
// config.split and config.seed. Throws DivergenceError on a non-finite loss.
TrainResult train(const Graph& g, const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace sgnn
