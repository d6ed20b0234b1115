#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "sgnn/errors.hpp"
#include "sgnn/stats.hpp"
#include "sgnn/train.hpp"

using namespace sgnn;

namespace {

Graph small_sbm(std::uint64_t seed, double separation = 1.5) {
  return sbm_generate(SbmParams{{40, 40, 40}, 0.15, 0.03, 8, separation}, seed);
}

TrainConfig quick_config() {
  TrainConfig c;
  c.split = {5, 30, 60};
  c.epochs = 60;
  c.patience = 1000;
  c.warmup_epochs = 10;
  c.model.hidden = 16;
  return c;
}

}  // namespace

TEST_CASE("stratified splits") {
  const Graph g = sbm_generate(SbmParams{{40, 40, 40, 40, 40, 40, 40}, 0.1, 0.01, 4, 1.0}, 1);
  const auto m = make_splits(g, 20, 50, 60, 9);
  std::size_t train = 0, val = 0, test = 0;
  std::vector<std::size_t> per_class(7, 0);
  for (std::size_t i = 0; i < g.n; ++i) {
    CHECK(m.train[i] + m.val[i] + m.test[i] <= 1);
    train += m.train[i];
    val += m.val[i];
    test += m.test[i];
    if (m.train[i]) ++per_class[static_cast<std::size_t>(g.labels[i])];
  }
  CHECK(train == 140);
  CHECK(val == 50);
  CHECK(test == 60);
  for (auto c : per_class) CHECK(c == 20);

  const auto again = make_splits(g, 20, 50, 60, 9);
  CHECK(again.train == m.train);
  CHECK(again.val == m.val);
  CHECK(again.test == m.test);
  CHECK_FALSE(make_splits(g, 20, 50, 60, 10).train == m.train);

  CHECK_THROWS_AS(make_splits(g, 41, 0, 0, 1), ValidationError);
  CHECK_THROWS_AS(make_splits(g, 20, 100, 100, 1), ValidationError);
}

TEST_CASE("Adam update rules") {
  DenseMatrix w{{1.0, -2.0, 0.5}};
  const DenseMatrix before = w;
  const std::vector<OptimParam> params{{&w, true, 1.0}};
  const std::vector<DenseMatrix> zero{DenseMatrix(1, 3, 0.0)};

  AdamState s0;
  adam_step(params, zero, s0, AdamSettings{0.01, 0.0});
  CHECK(w == before);

  AdamState s1;
  adam_step(params, zero, s1, AdamSettings{0.01, 0.1});
  for (std::size_t k = 0; k < 3; ++k) CHECK(w(0, k) == doctest::Approx(before(0, k) * (1 - 0.01 * 0.1)).epsilon(1e-15));

  w = before;
  AdamState s2;
  const std::vector<DenseMatrix> g{DenseMatrix{{0.3, -7.0, 1e-3}}};
  adam_step(params, g, s2, AdamSettings{0.01, 0.0});
  // First bias-corrected step is lr * g / (|g| + eps).
  CHECK(w(0, 0) == doctest::Approx(before(0, 0) - 0.01 * 0.3 / (0.3 + 1e-8)).epsilon(1e-12));
  CHECK(w(0, 1) == doctest::Approx(before(0, 1) + 0.01 * 7.0 / (7.0 + 1e-8)).epsilon(1e-12));
  CHECK(std::abs(w(0, 2) - before(0, 2)) == doctest::Approx(0.01).epsilon(1e-4));

  DenseMatrix mask{{0.0}};
  const std::vector<OptimParam> scaled{{&mask, false, 3.0}};
  AdamState s3;
  adam_step(scaled, std::vector<DenseMatrix>{DenseMatrix{{1.0}}}, s3, AdamSettings{0.01, 0.5});
  CHECK(mask(0, 0) == doctest::Approx(-0.03).epsilon(1e-6));
  CHECK_THROWS_AS(adam_step(params, std::vector<DenseMatrix>{}, s3, AdamSettings{}), ShapeError);
}

TEST_CASE("evaluation") {
  const std::vector<int> labels{0, 1, 2, 1};
  const std::vector<std::uint8_t> all{1, 1, 1, 1};
  const DenseMatrix perfect{{5, 0, 0}, {0, 5, 0}, {0, 0, 5}, {0, 5, 0}};
  CHECK(evaluate_logits(perfect, labels, all).accuracy == 1.0);
  const DenseMatrix uniform(4, 3, 0.0);
  const auto e = evaluate_logits(uniform, labels, all);
  CHECK(e.accuracy == 0.25);  // ties go to class 0
  CHECK(e.loss == doctest::Approx(std::log(3.0)));
  const std::vector<std::uint8_t> none(4, 0);
  CHECK_THROWS_AS(evaluate_logits(uniform, labels, none), ValidationError);
}

TEST_CASE("configuration validation") {
  TrainConfig c;
  c.lr = -1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = TrainConfig{};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = TrainConfig{};
  c.lambda = -0.1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = TrainConfig{};
  c.tau = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK(parse_ablation("no-class-tree") == Ablation::NoClassTree);
  CHECK_THROWS_AS(parse_ablation("nope"), ValidationError);
}

TEST_CASE("training is deterministic under a seed") {
  const Graph g = small_sbm(2);
  for (auto arch : {Architecture::Gcn, Architecture::Gat}) {
    auto c = quick_config();
    c.epochs = 25;
    c.model.arch = arch;
    c.model.heads = 4;
    c.lambda = 0.3;
    c.model.edge_mask = arch == Architecture::Gcn;
    c.seed = 5;
    const auto a = train(g, c), b = train(g, c);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
      CHECK(a.history[i].total_loss == b.history[i].total_loss);
      CHECK(a.history[i].val_acc == b.history[i].val_acc);
      CHECK(a.history[i].se_loss == b.history[i].se_loss);
    }
    CHECK(a.best_epoch == b.best_epoch);
  }
}

TEST_CASE("lambda zero is plain training") {
  Graph g = small_sbm(3);
  auto c = quick_config();
  c.model.dropout = 0.0;
  c.epochs = 30;
  c.seed = 11;
  apply_masks(g, make_splits(g, c.split.labeled_per_class, c.split.val, c.split.test, c.seed));
  const auto result = train(g, c);
  for (const auto& r : result.history) {
    CHECK(r.se_loss.empty());
    CHECK(r.total_loss == r.ce_loss);
  }

  // The same optimisation written without any regulariser code.
  std::mt19937_64 init(c.seed);
  Model m = init_model(c.model, g.feature_dim(), g.num_classes, g.edges.size(), init);
  const auto ctx = make_context(g);
  std::vector<OptimParam> optim;
  for (const auto& p : parameters(m)) optim.push_back({p.value, p.decay, 1.0});
  AdamState state;
  std::mt19937_64 unused(0);
  for (std::size_t epoch = 0; epoch < c.epochs; ++epoch) {
    ad::Tape t;
    const auto rec = forward(m, ctx, true, t, unused);
    auto ce = ad::cross_entropy_with_logits(rec.logits, g.labels, g.train_mask);
    CHECK(ce.item() == result.history[epoch].ce_loss);
    t.backward(ce);
    std::vector<DenseMatrix> grads;
    for (const auto& p : rec.params) grads.push_back(p.grad());
    adam_step(optim, grads, state, AdamSettings{c.lr, c.weight_decay});
  }
}

TEST_CASE("separable two-class graph is fit exactly") {
  const Graph g = sbm_generate(SbmParams{{50, 50}, 0.2, 0.0, 8, 6.0}, 4);
  TrainConfig c;
  c.split = {20, 20, 40};
  c.epochs = 200;
  c.patience = 200;
  c.model.hidden = 16;
  const auto r = train(g, c);
  double best_train = 0.0;
  for (const auto& e : r.history) best_train = std::max(best_train, e.train_acc);
  CHECK(best_train == 1.0);
}

TEST_CASE("selected snapshot has the best logged validation accuracy") {
  const Graph g = small_sbm(5);
  auto c = quick_config();
  c.patience = 10;
  c.epochs = 150;
  c.lambda = 0.5;
  c.model.edge_mask = true;
  const auto r = train(g, c);
  for (const auto& e : r.history) CHECK(r.final.val.accuracy >= e.val_acc);
  CHECK(r.final.val.accuracy == r.history[r.best_epoch].val_acc);
  CHECK(r.history.size() <= r.best_epoch + c.patience + 2);
}

TEST_CASE("structural entropy settles in the second half of training") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Graph g = small_sbm(10 + seed);
    auto c = quick_config();
    c.epochs = 120;
    c.warmup_epochs = 20;
    c.lambda = 0.5;
    c.model.edge_mask = true;
    c.seed = seed;
    const auto r = train(g, c);
    std::vector<double> epochs, se;
    for (std::size_t i = r.history.size() / 2; i < r.history.size(); ++i) {
      epochs.push_back(static_cast<double>(i));
      se.push_back(r.history[i].se_loss[0] + r.history[i].se_loss[1]);
    }
    CHECK(spearman(epochs, se) < 0.0);
  }
}

TEST_CASE("a non-finite loss aborts training") {
  const Graph g = small_sbm(6);
  auto c = quick_config();
  c.epochs = 5;
  c.lr = 1e300;
  CHECK_THROWS_AS(train(g, c), DivergenceError);
}

TEST_CASE("snapshot metrics are consistent") {
  const Graph g = small_sbm(7);
  auto c = quick_config();
  c.epochs = 30;
  const auto r = train(g, c);
  const auto& f = r.final;
  CHECK(f.generalization_gap == doctest::Approx(std::abs(f.test.accuracy - f.train.accuracy)));
  CHECK(f.dirichlet_energy.size() == 1);
  CHECK(f.dirichlet_energy[0] >= 0.0);
  CHECK((f.cross_class_ratio >= 0.0 && f.cross_class_ratio <= 1.0));
  CHECK(f.effective_edge_ratio == 1.0);
}
