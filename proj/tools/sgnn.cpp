// sgnn command-line entry point.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sgnn/complexity.hpp"
#include "sgnn/errors.hpp"
#include "sgnn/experiments.hpp"
#include "sgnn/io.hpp"
#include "sgnn/ser.hpp"
#include "sgnn/stats.hpp"
#include "sgnn/train.hpp"

namespace fs = std::filesystem;
using namespace sgnn;

namespace {

constexpr const char* kVersion = "1.0.0";

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDiverged = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Options shared by the commands that build a training configuration.
struct CommonOptions {
  std::string data;
  std::string fixture;
  std::uint64_t fixture_seed = 0;
  std::string config_file;
  std::vector<std::string> overrides;
  std::string model;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::string ser;
  std::string ablation;
  std::size_t epochs = 0;
  double tau = 0.0;
  std::size_t jobs = 0;
  std::string out;
  CLI::App* app = nullptr;

  bool given(const char* flag) const { return app->count(flag) > 0; }
};

void add_data_options(CLI::App* app, CommonOptions& o) {
  app->add_option("--data", o.data, "Dataset bundle directory");
  app->add_option("--fixture", o.fixture, "Synthetic fixture: tiny, sbm, noisy-sbm, heterophilous, cora-like, citeseer-like");
  app->add_option("--fixture-seed", o.fixture_seed, "Seed for the synthetic fixture (default 0)");
}

void add_train_options(CLI::App* app, CommonOptions& o) {
  o.app = app;
  add_data_options(app, o);
  app->add_option("--config", o.config_file, "Config file (JSON object or key=value lines)");
  app->add_option("--set", o.overrides, "Config override key=value (repeatable)");
  app->add_option("--model", o.model, "Architecture: gcn, gat or gt")
      ->check(CLI::IsMember({"gcn", "gat", "gt"}));
  app->add_option("--lambda", o.lambda, "SER strength (>= 0); with GCN, > 0 also turns on the edge mask")->check(CLI::NonNegativeNumber);
  app->add_option("--seed", o.seed, "Random seed (init, dropout, splits)");
  app->add_option("--ser", o.ser, "Structure entropy regularization: on or off")
      ->check(CLI::IsMember({"on", "off"}));
  app->add_option("--ablation", o.ablation, "none, no-class-tree or no-edge-control")
      ->check(CLI::IsMember({"none", "no-class-tree", "no-edge-control"}));
  app->add_option("--epochs", o.epochs, "Epoch cap")->check(CLI::PositiveNumber);
  app->add_option("--tau", o.tau, "Attention threshold for effective edges")->check(CLI::PositiveNumber);
  app->add_option("--jobs", o.jobs, "Worker threads for multi-run commands (0 = all cores)");
  app->add_option("--out", o.out, "Output file (default: stdout)");
}

struct Dataset {
  Graph graph;
  std::string descriptor;  // "fixture:<kind>:<seed>" or the bundle path
  std::optional<FixtureKind> fixture;
};

Dataset load_data(const std::string& data, const std::string& fixture, std::uint64_t fixture_seed) {
  if (!data.empty() && !fixture.empty()) throw UsageError("--data and --fixture are mutually exclusive");
  if (data.empty() && fixture.empty()) throw UsageError("one of --data or --fixture is required");
  Dataset d;
  if (!fixture.empty()) {
    FixtureKind kind;
    try {
      kind = parse_fixture(fixture);
    } catch (const ValidationError& e) {
      throw UsageError(e.what());
    }
    d.graph = make_fixture(kind, fixture_seed);
    d.descriptor = "fixture:" + fixture + ":" + std::to_string(fixture_seed);
    d.fixture = kind;
    return d;
  }
  std::vector<std::string> warnings;
  d.graph = load_dataset(data, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  d.descriptor = fs::absolute(data).string();
  return d;
}

Dataset load_descriptor(const std::string& descriptor) {
  if (descriptor.rfind("fixture:", 0) == 0) {
    const auto rest = descriptor.substr(8);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw UsageError("bad dataset descriptor in checkpoint");
    return load_data("", rest.substr(0, colon), std::stoull(rest.substr(colon + 1)));
  }
  return load_data(descriptor, "", 0);
}

TrainConfig build_config(const CommonOptions& o, const Dataset& d) {
  TrainConfig c;
  if (d.fixture) c.split = fixture_split(*d.fixture);
  try {
    if (!o.config_file.empty()) apply_config_file(c, o.config_file);
    for (const auto& kv : o.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      apply_config_entry(c, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (o.given("--model")) c.model.arch = parse_architecture(o.model);
    if (o.given("--lambda")) c.lambda = o.lambda;
    if (o.given("--seed")) c.seed = o.seed;
    if (o.given("--ablation")) c.ablation = parse_ablation(o.ablation);
    if (o.given("--epochs")) c.epochs = o.epochs;
    if (o.given("--tau")) c.tau = o.tau;
    if (o.given("--ser")) {
      if (o.ser == "off") {
        c.lambda = 0.0;
        c.model.edge_mask = false;
      } else {
        if (c.lambda == 0.0) throw UsageError("--ser on needs --lambda > 0");
        if (c.model.arch == Architecture::Gcn) c.model.edge_mask = true;
      }
    }
    // With a fixed propagation matrix and a detached posterior the structural
    // term has nothing to act on, so GCN gets the learnable mask unless told otherwise.
    const bool mask_explicit = std::any_of(o.overrides.begin(), o.overrides.end(),
                                           [](const std::string& kv) { return kv.rfind("edge_mask=", 0) == 0; });
    if (c.model.arch == Architecture::Gcn && c.lambda > 0.0 && !mask_explicit) c.model.edge_mask = true;
    if (c.model.arch != Architecture::Gcn) c.model.edge_mask = false;
    c.validate();
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  return c;
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
    std::cout.flush();
  } else {
    write_text(out, text);
    std::cerr << "wrote " << out << "\n";
  }
}

// ---------------------------------------------------------------- train

struct TrainOptions {
  std::string log;
  std::string checkpoint;
  bool bounds = false;
};

int cmd_train(const CommonOptions& o, const TrainOptions& t) {
  const Dataset d = load_data(o.data, o.fixture, o.fixture_seed);
  const TrainConfig cfg = build_config(o, d);
  std::string log_text;
  const auto result = train(d.graph, cfg, [&](const EpochRecord& r) {
    if (!t.log.empty()) log_text += epoch_log_line(r) + "\n";
  });
  if (!t.log.empty()) write_text(t.log, log_text);

  RunReport report;
  report.config = cfg;
  report.dataset = d.descriptor;
  report.nodes = d.graph.n;
  report.edges = d.graph.edges.size();
  report.features = d.graph.feature_dim();
  report.classes = d.graph.num_classes;
  report.result = result;
  if (t.bounds) {
    Graph g = d.graph;
    apply_masks(g, result.masks);
    const bool global = cfg.model.arch == Architecture::Gt && cfg.model.scope == AttentionScope::Global;
    const auto ctx = make_context(g, global);
    ad::Tape tape;
    const auto rec = evaluate_forward(result.model, ctx, tape);
    const auto classes = node_classes(g.labels, g.train_mask, argmax_rows(rec.logits.value()));
    std::size_t labeled = 0;
    for (auto m : g.train_mask) labeled += m;
    report.bounds = evaluate_bounds(result.model, ctx, rec, classes, labeled, BoundSettings{cfg.tau});
  }
  if (!t.checkpoint.empty()) {
    save_checkpoint(Checkpoint{result.model, cfg, result.masks, d.descriptor}, t.checkpoint);
    std::cerr << "wrote " << t.checkpoint << "\n";
  }
  std::fprintf(stderr, "best epoch %zu: train %.4f val %.4f test %.4f\n", result.best_epoch,
               result.final.train.accuracy, result.final.val.accuracy, result.final.test.accuracy);
  emit(o.out, run_report_json(report).dump(2) + "\n");
  return kOk;
}

// --------------------------------------------------------------- sweeps

int cmd_sweep_lambda(const CommonOptions& o, const std::string& grid, std::size_t seeds,
                     std::uint64_t seed_start) {
  std::vector<double> values;
  try {
    values = parse_grid(grid);
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  const Dataset d = load_data(o.data, o.fixture, o.fixture_seed);
  const TrainConfig cfg = build_config(o, d);
  const auto points = sweep_lambda(d.graph, cfg, values, seed_range(seed_start, seeds), o.jobs);
  for (const auto& p : points) {
    std::fprintf(stderr, "lambda %.3g: acc %.4f +- %.4f, cross-class %.4f\n", p.lambda, p.mean_test,
                 p.std_test, p.mean_cross_class);
  }
  emit(o.out, format_csv(lambda_table(points)));
  return kOk;
}

int cmd_sweep_edges(const CommonOptions& o, const std::string& fractions, std::size_t seeds,
                    std::uint64_t seed_start, const std::string& mode) {
  std::vector<double> values;
  try {
    values = parse_grid(fractions);
    for (double f : values)
      if (f < 0.0 || f > 1.0) throw ValidationError("fractions must lie in [0, 1]");
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  const Dataset d = load_data(o.data, o.fixture, o.fixture_seed);
  const TrainConfig cfg = build_config(o, d);
  const auto points =
      sweep_edges(d.graph, cfg, values, seed_range(seed_start, seeds), parse_sweep_mode(mode), o.jobs);
  const auto trend = edge_trend(points);
  std::fprintf(stderr, "spearman(edges, energy) = %.4f\nspearman(edges, gap) = %.4f\n", trend.energy_rho,
               trend.gap_rho);
  emit(o.out, format_csv(edge_table(points)));
  return kOk;
}

int cmd_ablate(const CommonOptions& o, std::size_t seeds, std::uint64_t seed_start) {
  const Dataset d = load_data(o.data, o.fixture, o.fixture_seed);
  TrainConfig cfg = build_config(o, d);
  if (!cfg.ser_active()) throw UsageError("ablate needs --lambda > 0");
  const auto rows = ablate(d.graph, cfg, seed_range(seed_start, seeds), o.jobs);
  for (const auto& r : rows) {
    std::fprintf(stderr, "%-16s acc %.4f +- %.4f, cross-class %.4f\n", r.name.c_str(), r.mean_test,
                 r.std_test, r.mean_cross_class);
  }
  emit(o.out, format_csv(ablation_table(rows)));
  return kOk;
}

// ---------------------------------------------------------- checkpoints

struct Loaded {
  Checkpoint ck;
  Graph graph;
  GraphContext ctx;
};

Loaded load_for_analysis(const std::string& checkpoint, const std::string& data,
                         const std::string& fixture, std::uint64_t fixture_seed, bool fixture_seed_given) {
  Loaded l;
  l.ck = load_checkpoint(checkpoint);
  Dataset d = (data.empty() && fixture.empty()) ? load_descriptor(l.ck.dataset)
                                                 : load_data(data, fixture, fixture_seed_given ? fixture_seed : 0);
  l.graph = std::move(d.graph);
  if (l.ck.masks.train.size() != l.graph.n) throw IntegrityError("checkpoint masks do not match the dataset");
  if (l.ck.model.input_dim != l.graph.feature_dim()) {
    throw IntegrityError("checkpoint feature width does not match the dataset");
  }
  apply_masks(l.graph, l.ck.masks);
  const auto& mc = l.ck.model.config;
  l.ctx = make_context(l.graph, mc.arch == Architecture::Gt && mc.scope == AttentionScope::Global);
  if (mc.edge_mask && l.ctx.num_edges != std::get<GcnModel>(l.ck.model.net).mask_logits->rows()) {
    throw IntegrityError("checkpoint edge mask does not match the dataset");
  }
  return l;
}

int cmd_bounds(const std::string& checkpoint, const std::string& data, const std::string& fixture,
               std::uint64_t fixture_seed, bool seed_given, const BoundSettings& settings,
               const std::string& out) {
  const auto l = load_for_analysis(checkpoint, data, fixture, fixture_seed, seed_given);
  ad::Tape tape;
  const auto rec = evaluate_forward(l.ck.model, l.ctx, tape);
  const auto classes = node_classes(l.graph.labels, l.graph.train_mask, argmax_rows(rec.logits.value()));
  std::size_t labeled = 0;
  for (auto m : l.graph.train_mask) labeled += m;
  const auto report = evaluate_bounds(l.ck.model, l.ctx, rec, classes, labeled, settings);
  const double train_err = 1.0 - evaluate_logits(rec.logits.value(), l.graph.labels, l.graph.train_mask).accuracy;
  Json j = to_json(report, train_err);
  j["schema_version"] = kReportSchemaVersion;
  j["kind"] = "bounds";
  j["model"] = std::string(to_string(l.ck.model.config.arch));
  for (const auto& b : report.bounds) {
    std::fprintf(stderr, "%-14s gap %.6g  empirical %.4f  total %.6g\n", b.name.c_str(), b.gap, train_err,
                 b.gap + train_err);
  }
  emit(out, j.dump(2) + "\n");
  return kOk;
}

int cmd_diagnose(const std::string& checkpoint, const std::string& data, const std::string& fixture,
                 std::uint64_t fixture_seed, bool seed_given, const std::string& out) {
  const auto l = load_for_analysis(checkpoint, data, fixture, fixture_seed, seed_given);
  ad::Tape tape;
  const auto rec = evaluate_forward(l.ck.model, l.ctx, tape);
  const auto& lt = *l.ctx.ops.l_tilde;

  Json layers = Json::array();
  const double input_energy = dirichlet_energy(lt, l.graph.features);
  for (std::size_t k = 0; k < rec.hidden.size(); ++k) {
    layers.push_back({{"layer", k + 1}, {"energy", dirichlet_energy(lt, rec.hidden[k].value())}});
  }
  layers.push_back({{"layer", "logits"}, {"energy", dirichlet_energy(lt, rec.logits.value())}});

  // Linear first-layer contraction check on every propagation the model uses.
  Json checks = Json::array();
  auto add_check = [&](const std::string& name, const DenseMatrix& w, const SparseMatrix& prop) {
    const auto c = energy_contraction_check(l.graph, w, prop);
    checks.push_back({{"propagation", name},
                      {"e_gnn", c.e_gnn},
                      {"e_mlp", c.e_mlp},
                      {"propagation_norm", c.propagation_norm},
                      {"bound", c.bound},
                      {"holds", c.holds}});
  };
  if (const auto* gcn = std::get_if<GcnModel>(&l.ck.model.net)) {
    add_check("a_hat", gcn->w1, *l.ctx.ops.a_hat);
    if (gcn->mask_logits) add_check("masked", gcn->w1, rec.omega_matrix(0));
  } else if (const auto* gat = std::get_if<GatModel>(&l.ck.model.net)) {
    for (std::size_t h = 0; h < gat->layer1.size(); ++h) {
      add_check("attention_head_" + std::to_string(h), gat->layer1[h].weight, rec.omega_head_matrix(0, h));
    }
  } else {
    const auto& gt = std::get<GtModel>(l.ck.model.net);
    for (std::size_t h = 0; h < gt.layers.front().value.size(); ++h) {
      const DenseMatrix w = matmul(gt.embed, gt.layers.front().value[h]);
      add_check("attention_head_" + std::to_string(h), w, rec.omega_head_matrix(0, h));
    }
  }
  Json j = {{"schema_version", kReportSchemaVersion},
            {"kind", "energy"},
            {"model", std::string(to_string(l.ck.model.config.arch))},
            {"input_energy", input_energy},
            {"layers", layers},
            {"contraction", checks}};
  for (const auto& c : checks) {
    std::fprintf(stderr, "%-20s E_gnn %.6g <= %.6g : %s\n", c["propagation"].get<std::string>().c_str(),
                 c["e_gnn"].get<double>(), c["bound"].get<double>(), c["holds"].get<bool>() ? "yes" : "NO");
  }
  emit(out, j.dump(2) + "\n");
  return kOk;
}

int cmd_gen_fixture(const std::string& kind, std::uint64_t seed, const std::string& out,
                    const std::string& format) {
  FixtureKind k;
  try {
    k = parse_fixture(kind);
  } catch (const ValidationError& e) {
    throw UsageError(e.what());
  }
  Graph g = make_fixture(k, seed);
  save_dataset(g, out, format == "csv" ? FeatureFormat::Csv : FeatureFormat::Binary);
  std::fprintf(stderr, "wrote %s: %zu nodes, %zu edges, %zu features, %zu classes\n", out.c_str(), g.n,
               g.edges.size(), g.feature_dim(), g.num_classes);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Message-passing GNNs with structural-complexity diagnostics and structure entropy regularization"};
  app.require_subcommand(0, 1);
  bool show_version = false;
  app.add_flag("--version", show_version, "Print version information as JSON and exit");

  CommonOptions train_o, lambda_o, edges_o, ablate_o;
  TrainOptions train_t;
  auto* train_cmd = app.add_subcommand("train", "Train one model and write a run report");
  add_train_options(train_cmd, train_o);
  train_cmd->add_option("--log", train_t.log, "JSON-lines per-epoch log file");
  train_cmd->add_option("--checkpoint", train_t.checkpoint, "Write the best-validation model here");
  train_cmd->add_flag("--bounds", train_t.bounds, "Include complexity measures and bound terms");

  std::string grid = "0:1:0.1";
  std::size_t lambda_seeds = 5;
  std::uint64_t lambda_seed_start = 0;
  auto* lambda_cmd = app.add_subcommand("sweep-lambda", "Accuracy over a grid of SER strengths (CSV)");
  add_train_options(lambda_cmd, lambda_o);
  lambda_cmd->add_option("--grid", grid, "start:stop:step or comma list (default 0:1:0.1)");
  lambda_cmd->add_option("--seeds", lambda_seeds, "Seeds per grid point (default 5)")->check(CLI::PositiveNumber);
  lambda_cmd->add_option("--seed-start", lambda_seed_start, "First seed (default 0)");

  std::string fractions = "0.1:1:0.1";
  std::size_t edge_seeds = 5;
  std::uint64_t edge_seed_start = 0;
  std::string mode = "frozen";
  auto* edges_cmd = app.add_subcommand("sweep-edges", "Energy and generalization gap over edge budgets (CSV)");
  add_train_options(edges_cmd, edges_o);
  edges_cmd->add_option("--fractions", fractions, "Kept-edge fractions, start:stop:step or list");
  edges_cmd->add_option("--seeds", edge_seeds, "Seeds per fraction (default 5)")->check(CLI::PositiveNumber);
  edges_cmd->add_option("--seed-start", edge_seed_start, "First seed (default 0)");
  edges_cmd->add_option("--mode", mode, "frozen (default: train once per seed, evaluate on each subgraph) or retrain")->check(CLI::IsMember({"retrain", "frozen"}));

  std::size_t ablate_seeds = 5;
  std::uint64_t ablate_seed_start = 0;
  auto* ablate_cmd = app.add_subcommand("ablate", "Full SER vs. its ablations and vanilla training (CSV)");
  add_train_options(ablate_cmd, ablate_o);
  ablate_cmd->add_option("--seeds", ablate_seeds, "Seeds per variant (default 5)")->check(CLI::PositiveNumber);
  ablate_cmd->add_option("--seed-start", ablate_seed_start, "First seed (default 0)");

  std::string ck_path, an_data, an_fixture, an_out;
  std::uint64_t an_fixture_seed = 0;
  BoundSettings bound_settings;
  auto* bounds_cmd = app.add_subcommand("bounds", "Structural complexity and generalization bound terms (JSON)");
  bounds_cmd->add_option("--checkpoint", ck_path, "Checkpoint written by train")->required();
  bounds_cmd->add_option("--data", an_data, "Dataset bundle (default: the one recorded in the checkpoint)");
  bounds_cmd->add_option("--fixture", an_fixture, "Synthetic fixture instead of a bundle");
  bounds_cmd->add_option("--fixture-seed", an_fixture_seed, "Fixture seed");
  bounds_cmd->add_option("--tau", bound_settings.tau, "Attention threshold (default 0.01)")->check(CLI::PositiveNumber);
  bounds_cmd->add_option("--delta", bound_settings.delta, "Confidence parameter in (0, 1) (default 0.1)")
      ->check(CLI::Range(0.0, 1.0));
  bounds_cmd->add_option("--lipschitz", bound_settings.lipschitz, "Loss Lipschitz constant (default sqrt 2)")
      ->check(CLI::PositiveNumber);
  bounds_cmd->add_option("--out", an_out, "Output file (default: stdout)");

  auto* energy_cmd = app.add_subcommand("diagnose-energy", "Per-layer Dirichlet energy and contraction checks (JSON)");
  energy_cmd->add_option("--checkpoint", ck_path, "Checkpoint written by train")->required();
  energy_cmd->add_option("--data", an_data, "Dataset bundle (default: the one recorded in the checkpoint)");
  energy_cmd->add_option("--fixture", an_fixture, "Synthetic fixture instead of a bundle");
  energy_cmd->add_option("--fixture-seed", an_fixture_seed, "Fixture seed");
  energy_cmd->add_option("--out", an_out, "Output file (default: stdout)");

  std::string fx_kind = "tiny", fx_out, fx_format = "f32";
  std::uint64_t fx_seed = 0;
  auto* fixture_cmd = app.add_subcommand("gen-fixture", "Write a synthetic dataset bundle");
  fixture_cmd->add_option("--kind", fx_kind, "tiny, sbm, noisy-sbm, heterophilous, cora-like or citeseer-like (default tiny)");
  fixture_cmd->add_option("--seed", fx_seed, "Generator seed (default 0)");
  fixture_cmd->add_option("--out", fx_out, "Output directory")->required();
  fixture_cmd->add_option("--format", fx_format, "Feature file format: f32 (default) or csv")
      ->check(CLI::IsMember({"f32", "csv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (show_version) {
      std::cout << Json{{"name", "sgnn"},
                        {"version", kVersion},
                        {"checkpoint_version", kCheckpointVersion},
                        {"report_schema_version", kReportSchemaVersion}}
                       .dump()
                << "\n";
      return kOk;
    }
    if (*train_cmd) return cmd_train(train_o, train_t);
    if (*lambda_cmd) return cmd_sweep_lambda(lambda_o, grid, lambda_seeds, lambda_seed_start);
    if (*edges_cmd) return cmd_sweep_edges(edges_o, fractions, edge_seeds, edge_seed_start, mode);
    if (*ablate_cmd) return cmd_ablate(ablate_o, ablate_seeds, ablate_seed_start);
    if (*bounds_cmd) {
      return cmd_bounds(ck_path, an_data, an_fixture, an_fixture_seed, bounds_cmd->count("--fixture-seed") > 0,
                        bound_settings, an_out);
    }
    if (*energy_cmd) {
      return cmd_diagnose(ck_path, an_data, an_fixture, an_fixture_seed, energy_cmd->count("--fixture-seed") > 0,
                          an_out);
    }
    if (*fixture_cmd) return cmd_gen_fixture(fx_kind, fx_seed, fx_out, fx_format);
    std::cerr << app.help();
    return kUsage;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\nRun with --help for usage.\n";
    return kUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
}
