#pragma once

// Multi-run experiment drivers (lambda sweeps, edge-budget sweeps, ablations)
// and the synthetic fixtures they run on. Runs execute on a worker pool; each
// worker owns its runs, results are merged in deterministic order.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sgnn/graph.hpp"
#include "sgnn/io.hpp"
#include "sgnn/train.hpp"

namespace sgnn {

// Runs task(i) for i in [0, count) on up to `jobs` threads (0 = hardware
// concurrency). The first exception thrown by any task is rethrown.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& task);

// ---- fixtures

enum class FixtureKind { Tiny, Sbm, NoisySbm, Heterophilous, CoraLike, CiteseerLike };

std::string_view to_string(FixtureKind k);
FixtureKind parse_fixture(std::string_view s);

// tiny: 60-node, 3-class SBM for smoke tests.
// sbm: 500-node, 5-class SBM with moderately informative features.
// noisy-sbm: the sbm fixture plus injected cross-class edges.
// heterophilous: 500-node SBM where most edges cross classes.
// cora-like / citeseer-like: class-imbalanced graphs with the node, class,
//   edge and feature counts of the two citation benchmarks, sparse binary
//   bag-of-words features and matching edge homophily (0.81 / 0.74).
Graph make_fixture(FixtureKind kind, std::uint64_t seed);

// Split sizes that fit the fixture (standard 20 per class, val/test scaled).
SplitSpec fixture_split(FixtureKind kind);

// ---- per-run outcome

struct RunOutcome {
  std::uint64_t seed = 0;
  SnapshotMetrics metrics;  // best-validation snapshot
  EpochRecord last;         // state when training stopped
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

// Trains on `g` with masks drawn from `seed` (same splits for every config
// sharing the seed) and config.seed = seed.
RunOutcome run_seed(const Graph& g, TrainConfig config, std::uint64_t seed);

// ---- lambda sweep

struct LambdaPoint {
  double lambda = 0.0;
  std::vector<RunOutcome> runs;  // one per seed, seed order
  double mean_test = 0.0, std_test = 0.0;
  double mean_val = 0.0;
  double mean_cross_class = 0.0;
  double mean_effective = 0.0;
};

// Grid points with lambda = 0 train the plain backbone (edge mask off).
std::vector<LambdaPoint> sweep_lambda(const Graph& g, const TrainConfig& base,
                                      std::span<const double> grid,
                                      std::span<const std::uint64_t> seeds, std::size_t jobs);

// "a:b:step" inclusive grid; also accepts a comma-separated list.
std::vector<double> parse_grid(std::string_view spec);

// Columns: lambda, mean_acc, std_acc, mean_val_acc, mean_cross_class, mean_effective_edge_ratio.
CsvTable lambda_table(std::span<const LambdaPoint> points);

// ---- edge-budget sweep

enum class SweepMode { Retrain, Frozen };

std::string_view to_string(SweepMode m);
SweepMode parse_sweep_mode(std::string_view s);

struct EdgePoint {
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::size_t edges = 0;
  double energy = 0.0;             // first hidden layer, full-graph Laplacian
  double energy_normalized = 0.0;  // energy / ||H||_F^2
  double train_error = 0.0;
  double test_error = 0.0;
  double gap = 0.0;
};

// For each (fraction, seed): edges are subsampled with that seed, splits come
// from the seed. Retrain mode trains on each subgraph; frozen mode trains once
// per seed on the full graph and evaluates the same weights on each subgraph.
std::vector<EdgePoint> sweep_edges(const Graph& g, const TrainConfig& base,
                                   std::span<const double> fractions,
                                   std::span<const std::uint64_t> seeds, SweepMode mode,
                                   std::size_t jobs);

// Columns: fraction, seed, edges, energy, energy_normalized, train_error, test_error, gap.
CsvTable edge_table(std::span<const EdgePoint> points);

struct EdgeTrend {
  double energy_rho = 0.0;  // Spearman(edge count, energy)
  double gap_rho = 0.0;     // Spearman(edge count, gap)
};

EdgeTrend edge_trend(std::span<const EdgePoint> points);

// ---- ablations

struct AblationResult {
  std::string name;  // full, no-class-tree, no-edge-control, vanilla
  std::vector<RunOutcome> runs;
  double mean_test = 0.0, std_test = 0.0;
  double mean_cross_class = 0.0;
};

// `base` must have lambda > 0. The vanilla row uses lambda = 0 and no edge mask.
std::vector<AblationResult> ablate(const Graph& g, const TrainConfig& base,
                                   std::span<const std::uint64_t> seeds, std::size_t jobs);

// Columns: variant (0 full, 1 no-class-tree, 2 no-edge-control, 3 vanilla),
// mean_acc, std_acc, mean_cross_class.
CsvTable ablation_table(std::span<const AblationResult> rows);

std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count);

}  // namespace sgnn
