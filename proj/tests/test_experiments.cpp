#include <doctest.h>

#include <atomic>
#include <cmath>
#include <set>
#include <stdexcept>

#include "sgnn/errors.hpp"
#include "sgnn/experiments.hpp"
#include "sgnn/stats.hpp"

using namespace sgnn;

TEST_CASE("stats") {
  const std::vector<double> xs{1, 2, 3, 4};
  CHECK(mean(xs) == 2.5);
  CHECK(stddev(xs) == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-12));
  CHECK(stddev(std::vector<double>{7}) == 0.0);

  CHECK(spearman(xs, std::vector<double>{10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman(xs, std::vector<double>{1, 4, 9, 100}) == doctest::Approx(1.0));  // monotone, nonlinear
  CHECK(spearman(xs, std::vector<double>{4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(spearman(xs, std::vector<double>{5, 5, 5, 5}) == 0.0);
  // Ties take average ranks: ranks (1.5, 1.5, 3, 4) vs (1, 2, 3, 4).
  CHECK(spearman(std::vector<double>{1, 1, 2, 3}, xs) == doctest::Approx(0.9486832980505138).epsilon(1e-12));
}

TEST_CASE("parse_grid") {
  CHECK(parse_grid("0:1:0.25") == std::vector<double>{0, 0.25, 0.5, 0.75, 1.0});
  const auto g = parse_grid("0.1:0.7:0.2");
  REQUIRE(g.size() == 4);
  CHECK(g.back() == doctest::Approx(0.7));
  CHECK(parse_grid("0,0.3, 1") == std::vector<double>{0, 0.3, 1});
  CHECK(parse_grid("0.5") == std::vector<double>{0.5});
  CHECK_THROWS_AS(parse_grid(""), ValidationError);
  CHECK_THROWS_AS(parse_grid("0:1:0"), ValidationError);
  CHECK_THROWS_AS(parse_grid("1:0:0.1"), ValidationError);
  CHECK_THROWS_AS(parse_grid("a,b"), ValidationError);
}

TEST_CASE("parallel_for covers every index once and rethrows") {
  for (std::size_t jobs : {1, 3, 0}) {
    std::vector<std::atomic<int>> hits(37);
    parallel_for(hits.size(), jobs, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
  }
  CHECK_THROWS_AS(parallel_for(10, 2,
                               [](std::size_t i) {
                                 if (i == 6) throw ValidationError("boom");
                               }),
                  ValidationError);
  parallel_for(0, 4, [](std::size_t) { FAIL("no tasks expected"); });
}

TEST_CASE("seed_range and enum names") {
  CHECK(seed_range(5, 3) == std::vector<std::uint64_t>{5, 6, 7});
  for (auto k : {FixtureKind::Tiny, FixtureKind::Sbm, FixtureKind::NoisySbm, FixtureKind::Heterophilous,
                 FixtureKind::CoraLike, FixtureKind::CiteseerLike})
    CHECK(parse_fixture(to_string(k)) == k);
  CHECK_THROWS_AS(parse_fixture("pubmed"), ValidationError);
  CHECK(parse_sweep_mode(to_string(SweepMode::Frozen)) == SweepMode::Frozen);
  CHECK(parse_sweep_mode(to_string(SweepMode::Retrain)) == SweepMode::Retrain);
}

TEST_CASE("fixtures are deterministic and fit their splits") {
  for (auto k : {FixtureKind::Tiny, FixtureKind::Sbm, FixtureKind::NoisySbm, FixtureKind::Heterophilous}) {
    const Graph a = make_fixture(k, 11), b = make_fixture(k, 11);
    CHECK(a.edges == b.edges);
    CHECK(a.labels == b.labels);
    CHECK_NOTHROW(a.validate());
    const auto s = fixture_split(k);
    const Masks m = make_splits(a, s.labeled_per_class, s.val, s.test, 0);
    std::size_t tr = 0;
    for (auto v : m.train) tr += v;
    CHECK(tr == s.labeled_per_class * a.num_classes);
  }
  const Graph tiny = make_fixture(FixtureKind::Tiny, 0);
  CHECK(tiny.n == 60);
  CHECK(tiny.num_classes == 3);
  CHECK(make_fixture(FixtureKind::NoisySbm, 0).edges.size() > make_fixture(FixtureKind::Sbm, 0).edges.size());
}

namespace {

TrainConfig quick_config() {
  TrainConfig c;
  c.epochs = 20;
  c.warmup_epochs = 5;
  c.patience = 20;
  c.model.hidden = 8;
  c.split = fixture_split(FixtureKind::Tiny);
  return c;
}

}  // namespace

TEST_CASE("lambda sweep runs paired seeds and is job-count independent") {
  const Graph g = make_fixture(FixtureKind::Tiny, 0);
  TrainConfig c = quick_config();
  c.model.edge_mask = true;
  const std::vector<double> grid{0.0, 0.5};
  const auto seeds = seed_range(0, 2);
  const auto one = sweep_lambda(g, c, grid, seeds, 1);
  const auto two = sweep_lambda(g, c, grid, seeds, 2);
  REQUIRE(one.size() == 2);
  for (std::size_t p = 0; p < one.size(); ++p) {
    CHECK(one[p].lambda == grid[p]);
    REQUIRE(one[p].runs.size() == 2);
    CHECK(one[p].mean_test == two[p].mean_test);
    for (std::size_t s = 0; s < 2; ++s) {
      CHECK(one[p].runs[s].seed == seeds[s]);
      CHECK(one[p].runs[s].last.epoch + 1 == one[p].runs[s].epochs_run);
    }
  }
  const auto t = lambda_table(one);
  CHECK(t.header.size() == 6);
  CHECK(t.rows.size() == 2);
}

TEST_CASE("edge sweep yields one point per fraction and seed") {
  const Graph g = make_fixture(FixtureKind::Tiny, 0);
  const std::vector<double> fr{0.5, 1.0};
  const auto seeds = seed_range(0, 2);
  for (auto mode : {SweepMode::Frozen, SweepMode::Retrain}) {
    const auto pts = sweep_edges(g, quick_config(), fr, seeds, mode, 1);
    REQUIRE(pts.size() == 4);
    for (const auto& p : pts) {
      CHECK(p.edges == static_cast<std::size_t>(std::lround(p.fraction * g.edges.size())));
      CHECK(p.energy >= 0.0);
      CHECK(p.gap == doctest::Approx(std::abs(p.test_error - p.train_error)));
    }
    CHECK(edge_table(pts).rows.size() == 4);
  }
}

TEST_CASE("ablation rows") {
  const Graph g = make_fixture(FixtureKind::Tiny, 0);
  TrainConfig c = quick_config();
  c.model.edge_mask = true;
  c.lambda = 0.3;
  const auto rows = ablate(g, c, seed_range(0, 1), 1);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].name == "full");
  CHECK(rows[3].name == "vanilla");
  CHECK(ablation_table(rows).rows.size() == 4);
  c.lambda = 0.0;
  CHECK_THROWS_AS(ablate(g, c, seed_range(0, 1), 1), ValidationError);
}
