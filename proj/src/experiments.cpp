#include "sgnn/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "sgnn/errors.hpp"
#include "sgnn/stats.hpp"

namespace sgnn {

void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& task) {
  if (jobs == 0) jobs = std::max(1U, std::thread::hardware_concurrency());
  jobs = std::min(jobs, count);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < jobs; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

// -------------------------------------------------------------- fixtures

std::string_view to_string(FixtureKind k) {
  switch (k) {
    case FixtureKind::Tiny: return "tiny";
    case FixtureKind::Sbm: return "sbm";
    case FixtureKind::NoisySbm: return "noisy-sbm";
    case FixtureKind::Heterophilous: return "heterophilous";
    case FixtureKind::CoraLike: return "cora-like";
    case FixtureKind::CiteseerLike: return "citeseer-like";
  }
  return "?";
}

FixtureKind parse_fixture(std::string_view s) {
  if (s == "tiny") return FixtureKind::Tiny;
  if (s == "sbm") return FixtureKind::Sbm;
  if (s == "noisy-sbm") return FixtureKind::NoisySbm;
  if (s == "heterophilous") return FixtureKind::Heterophilous;
  if (s == "cora-like") return FixtureKind::CoraLike;
  if (s == "citeseer-like") return FixtureKind::CiteseerLike;
  throw ValidationError("unknown fixture '" + std::string(s) + "'");
}

namespace {

SbmParams sbm_params() {
  SbmParams p;
  p.blocks = {100, 100, 100, 100, 100};
  p.p_in = 0.1;
  p.p_out = 0.02;
  p.feature_dim = 64;
  p.feature_separation = 2.0;
  return p;
}

}  // namespace

Graph make_fixture(FixtureKind kind, std::uint64_t seed) {
  Graph g;
  switch (kind) {
    case FixtureKind::Tiny: {
      SbmParams p;
      p.blocks = {20, 20, 20};
      p.p_in = 0.25;
      p.p_out = 0.03;
      p.feature_dim = 8;
      p.feature_separation = 2.0;
      g = sbm_generate(p, seed);
      break;
    }
    case FixtureKind::Sbm:
      g = sbm_generate(sbm_params(), seed);
      break;
    case FixtureKind::NoisySbm:
      g = add_cross_class_edges(sbm_generate(sbm_params(), seed), 5000, seed + 1);
      break;
    case FixtureKind::Heterophilous: {
      SbmParams p = sbm_params();
      p.p_in = 0.02;
      p.p_out = 0.02;
      g = add_cross_class_edges(sbm_generate(p, seed), 2000, seed + 1);
      break;
    }
    case FixtureKind::CoraLike: {
      CitationLikeParams p;
      p.class_sizes = {818, 426, 418, 351, 298, 217, 180};
      p.target_edges = 5429;
      p.homophily = 0.81;
      p.vocabulary = 1433;
      p.topic_words = 150;
      p.words_per_node = 18;
      p.topic_probability = 0.2;
      g = citation_like_generate(p, seed);
      break;
    }
    case FixtureKind::CiteseerLike: {
      CitationLikeParams p;
      p.class_sizes = {264, 590, 668, 701, 596, 508};
      p.target_edges = 4732;
      p.homophily = 0.74;
      p.vocabulary = 3703;
      p.topic_words = 300;
      p.words_per_node = 32;
      p.topic_probability = 0.3;
      g = citation_like_generate(p, seed);
      break;
    }
  }
  g.name = std::string(to_string(kind));
  return g;
}

SplitSpec fixture_split(FixtureKind kind) {
  switch (kind) {
    case FixtureKind::Tiny: return {5, 15, 30};
    case FixtureKind::CoraLike:
    case FixtureKind::CiteseerLike: return {20, 500, 1000};
    default: return {20, 150, 250};
  }
}

// ------------------------------------------------------------------ runs

RunOutcome run_seed(const Graph& g, TrainConfig config, std::uint64_t seed) {
  Graph work = g;
  apply_masks(work, make_splits(g, config.split.labeled_per_class, config.split.val,
                                config.split.test, seed));
  config.seed = seed;
  const auto r = train(work, config);
  return RunOutcome{seed, r.final, r.history.back(), r.best_epoch, r.history.size()};
}

std::vector<std::uint64_t> seed_range(std::uint64_t first, std::size_t count) {
  std::vector<std::uint64_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = first + i;
  return out;
}

namespace {

std::vector<double> collect(const std::vector<RunOutcome>& runs, double (*f)(const RunOutcome&)) {
  std::vector<double> out;
  for (const auto& r : runs) out.push_back(f(r));
  return out;
}

double test_acc(const RunOutcome& r) { return r.metrics.test.accuracy; }
double val_acc(const RunOutcome& r) { return r.metrics.val.accuracy; }
double cross(const RunOutcome& r) { return r.metrics.cross_class_ratio; }
double effective(const RunOutcome& r) { return r.metrics.effective_edge_ratio; }

// lambda = 0 means the plain backbone: no regularizer and no learnable edge mask.
TrainConfig with_lambda(TrainConfig cfg, double lambda) {
  cfg.lambda = lambda;
  if (lambda == 0.0) cfg.model.edge_mask = false;
  return cfg;
}

}  // namespace

std::vector<LambdaPoint> sweep_lambda(const Graph& g, const TrainConfig& base,
                                      std::span<const double> grid,
                                      std::span<const std::uint64_t> seeds, std::size_t jobs) {
  if (seeds.empty()) throw ValidationError("sweep_lambda: no seeds");
  std::vector<LambdaPoint> points(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    points[i].lambda = grid[i];
    points[i].runs.resize(seeds.size());
  }
  parallel_for(grid.size() * seeds.size(), jobs, [&](std::size_t task) {
    const std::size_t gi = task / seeds.size();
    const std::size_t si = task % seeds.size();
    points[gi].runs[si] = run_seed(g, with_lambda(base, grid[gi]), seeds[si]);
  });
  for (auto& p : points) {
    const auto acc = collect(p.runs, test_acc);
    p.mean_test = mean(acc);
    p.std_test = stddev(acc);
    p.mean_val = mean(collect(p.runs, val_acc));
    p.mean_cross_class = mean(collect(p.runs, cross));
    p.mean_effective = mean(collect(p.runs, effective));
  }
  return points;
}

std::vector<double> parse_grid(std::string_view spec) {
  auto number = [&](std::string_view s) {
    try {
      std::size_t used = 0;
      const std::string str(s);
      const double v = std::stod(str, &used);
      if (used != str.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ValidationError("grid: bad number '" + std::string(s) + "'");
    }
  };
  std::vector<double> out;
  if (spec.find(':') != std::string_view::npos) {
    const auto a = spec.find(':');
    const auto b = spec.find(':', a + 1);
    if (b == std::string_view::npos) throw ValidationError("grid: expected start:stop:step");
    const double start = number(spec.substr(0, a));
    const double stop = number(spec.substr(a + 1, b - a - 1));
    const double step = number(spec.substr(b + 1));
    if (!(step > 0.0) || stop < start) throw ValidationError("grid: need step > 0 and stop >= start");
    const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (std::size_t i = 0; i < count; ++i) {
      // Round to the step's decimal grid so 0.1 * 3 prints as 0.3.
      out.push_back(std::round((start + step * static_cast<double>(i)) * 1e12) / 1e12);
    }
    return out;
  }
  std::size_t start = 0;
  while (start <= spec.size()) {
    auto end = spec.find(',', start);
    if (end == std::string_view::npos) end = spec.size();
    out.push_back(number(spec.substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

CsvTable lambda_table(std::span<const LambdaPoint> points) {
  CsvTable t;
  t.header = {"lambda", "mean_acc", "std_acc", "mean_val_acc", "mean_cross_class", "mean_effective_edge_ratio"};
  for (const auto& p : points) {
    t.rows.push_back({p.lambda, p.mean_test, p.std_test, p.mean_val, p.mean_cross_class, p.mean_effective});
  }
  return t;
}

// ------------------------------------------------------------ edge sweep

std::string_view to_string(SweepMode m) { return m == SweepMode::Retrain ? "retrain" : "frozen"; }

SweepMode parse_sweep_mode(std::string_view s) {
  if (s == "retrain") return SweepMode::Retrain;
  if (s == "frozen") return SweepMode::Frozen;
  throw ValidationError("unknown sweep mode '" + std::string(s) + "'");
}

namespace {

EdgePoint measure(const Model& model, const Graph& sub, const SparseMatrix& reference_laplacian,
                  double fraction, std::uint64_t seed) {
  const bool global = model.config.arch == Architecture::Gt && model.config.scope == AttentionScope::Global;
  const GraphContext ctx = make_context(sub, global);
  ad::Tape tape;
  const auto rec = evaluate_forward(model, ctx, tape);
  EdgePoint p;
  p.fraction = fraction;
  p.seed = seed;
  p.edges = sub.edges.size();
  const DenseMatrix& h = rec.hidden.front().value();
  p.energy = dirichlet_energy(reference_laplacian, h);
  const double mass = trace_inner(h, h);
  p.energy_normalized = mass > 0.0 ? p.energy / mass : 0.0;
  const auto& logits = rec.logits.value();
  p.train_error = 1.0 - evaluate_logits(logits, sub.labels, sub.train_mask).accuracy;
  p.test_error = 1.0 - evaluate_logits(logits, sub.labels, sub.test_mask).accuracy;
  p.gap = generalization_gap(p.train_error, p.test_error);
  return p;
}

}  // namespace

std::vector<EdgePoint> sweep_edges(const Graph& g, const TrainConfig& base,
                                   std::span<const double> fractions,
                                   std::span<const std::uint64_t> seeds, SweepMode mode,
                                   std::size_t jobs) {
  if (seeds.empty() || fractions.empty()) throw ValidationError("sweep_edges: empty sweep");
  const auto reference = normalize(g).l_tilde;
  std::vector<EdgePoint> points(fractions.size() * seeds.size());

  if (mode == SweepMode::Retrain) {
    parallel_for(points.size(), jobs, [&](std::size_t task) {
      const std::size_t si = task / fractions.size();
      const std::size_t fi = task % fractions.size();
      const auto seed = seeds[si];
      Graph sub = edge_subsample(g, fractions[fi], seed);
      apply_masks(sub, make_splits(g, base.split.labeled_per_class, base.split.val, base.split.test, seed));
      TrainConfig cfg = base;
      cfg.seed = seed;
      const auto r = train(sub, cfg);
      points[task] = measure(r.model, sub, *reference, fractions[fi], seed);
    });
  } else {
    parallel_for(seeds.size(), jobs, [&](std::size_t si) {
      const auto seed = seeds[si];
      Graph full = g;
      apply_masks(full, make_splits(g, base.split.labeled_per_class, base.split.val, base.split.test, seed));
      TrainConfig cfg = base;
      cfg.seed = seed;
      const auto r = train(full, cfg);
      for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
        Graph sub = edge_subsample(full, fractions[fi], seed);
        points[si * fractions.size() + fi] = measure(r.model, sub, *reference, fractions[fi], seed);
      }
    });
  }
  return points;
}

CsvTable edge_table(std::span<const EdgePoint> points) {
  CsvTable t;
  t.header = {"fraction", "seed", "edges", "energy", "energy_normalized", "train_error", "test_error", "gap"};
  for (const auto& p : points) {
    t.rows.push_back({p.fraction, static_cast<double>(p.seed), static_cast<double>(p.edges), p.energy,
                      p.energy_normalized, p.train_error, p.test_error, p.gap});
  }
  return t;
}

EdgeTrend edge_trend(std::span<const EdgePoint> points) {
  std::vector<double> edges, energy, gap;
  for (const auto& p : points) {
    edges.push_back(static_cast<double>(p.edges));
    energy.push_back(p.energy);
    gap.push_back(p.gap);
  }
  return {spearman(edges, energy), spearman(edges, gap)};
}

// -------------------------------------------------------------- ablation

std::vector<AblationResult> ablate(const Graph& g, const TrainConfig& base,
                                   std::span<const std::uint64_t> seeds, std::size_t jobs) {
  if (!base.ser_active()) throw ValidationError("ablate: base config needs lambda > 0");
  struct Variant {
    const char* name;
    Ablation ablation;
    double lambda;
  };
  const Variant variants[] = {{"full", Ablation::None, base.lambda},
                              {"no-class-tree", Ablation::NoClassTree, base.lambda},
                              {"no-edge-control", Ablation::NoEdgeControl, base.lambda},
                              {"vanilla", Ablation::None, 0.0}};
  std::vector<AblationResult> rows(std::size(variants));
  for (std::size_t v = 0; v < rows.size(); ++v) {
    rows[v].name = variants[v].name;
    rows[v].runs.resize(seeds.size());
  }
  parallel_for(rows.size() * seeds.size(), jobs, [&](std::size_t task) {
    const std::size_t v = task / seeds.size();
    const std::size_t si = task % seeds.size();
    TrainConfig cfg = with_lambda(base, variants[v].lambda);
    cfg.ablation = variants[v].ablation;
    rows[v].runs[si] = run_seed(g, cfg, seeds[si]);
  });
  for (auto& r : rows) {
    const auto acc = collect(r.runs, test_acc);
    r.mean_test = mean(acc);
    r.std_test = stddev(acc);
    r.mean_cross_class = mean(collect(r.runs, cross));
  }
  return rows;
}

CsvTable ablation_table(std::span<const AblationResult> rows) {
  CsvTable t;
  t.header = {"variant", "mean_acc", "std_acc", "mean_cross_class"};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    t.rows.push_back({static_cast<double>(i), rows[i].mean_test, rows[i].std_test, rows[i].mean_cross_class});
  }
  return t;
}

}  // namespace sgnn
