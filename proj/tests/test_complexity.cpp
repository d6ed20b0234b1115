#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "sgnn/complexity.hpp"
#include "sgnn/errors.hpp"

using namespace sgnn;

namespace {

using Pairs = std::vector<std::pair<std::size_t, std::size_t>>;

BoundInputs unit_inputs() {
  BoundInputs b;
  b.L = b.B = b.R0 = b.R1 = b.R2 = b.R_tilde = b.pi_norm = 1.0;
  b.m = 100;
  b.n = 1000;
  b.delta = 0.1;
  b.heads = 1;
  return b;
}

// Largest singular value through the eigenvalues of W^T W.
double svd_norm(const DenseMatrix& w) {
  const auto e = jacobi_eigh(matmul_tn(w, w));
  return std::sqrt(std::max(0.0, e.values.back()));
}

SparseMatrix uniform_rows(std::size_t n, std::size_t per_row) {
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < per_row; ++k) t.push_back({i, (i + k) % n, 1.0 / static_cast<double>(per_row)});
  return SparseMatrix::from_triplets(n, n, std::move(t));
}

}  // namespace

TEST_CASE("structural complexity counts") {
  const Graph k3 = test::complete_graph(3, DenseMatrix(3, 1, 1.0), {0, 0, 0}, 1);
  CHECK(eta_fixed(*normalize(k3).a_hat) == 9);
  const Graph one = make_graph(1, Pairs{}, DenseMatrix(1, 1, 1.0), {0}, 1);
  CHECK(eta_fixed(*normalize(one).a_hat) == 1);

  const auto deg4 = uniform_rows(10, 5);  // degree 4 plus the self-loop, weights 0.2
  CHECK(eta_thresholded(deg4, 0.1) == 50);
  CHECK(eta_thresholded(deg4, 0.25) == 0);
  CHECK(eta_thresholded(deg4, 0.2) == 50);
  const SparseMatrix mixed(1, 3, {0, 3}, {0, 1, 2}, {0.7, 0.2, 0.1});
  CHECK(eta_thresholded(mixed, 0.15) == 2);
  CHECK_THROWS_AS(eta_thresholded(mixed, 0.0), ValidationError);

  const std::vector<SparseMatrix> single{deg4};
  CHECK(eta_multihead(single, 0.1) == eta_thresholded(deg4, 0.1));
  const std::vector<SparseMatrix> three{mixed, mixed, mixed};
  CHECK(eta_multihead(three, 0.15) == 6);
  const SparseMatrix five(1, 5, {0, 5}, {0, 1, 2, 3, 4}, {1, 1, 1, 1, 1});
  const SparseMatrix seven(1, 7, {0, 7}, {0, 1, 2, 3, 4, 5, 6}, {1, 1, 1, 1, 1, 1, 1});
  const std::vector<SparseMatrix> pair{five, seven};
  CHECK(eta_multihead(pair, 0.5) == 12);
}

TEST_CASE("thresholded count is nonincreasing in tau") {
  std::mt19937_64 rng(1);
  const auto s = test::random_sparse(30, 30, 0.3, rng);
  std::vector<double> vals = s.values();
  for (auto& v : vals) v = std::abs(v);
  const auto a = s.with_values(vals);
  std::size_t prev = eta_thresholded(a, 1e-6);
  for (double tau = 1e-3; tau < 3.0; tau *= 1.5) {
    const auto cur = eta_thresholded(a, tau);
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("bound arithmetic") {
  const auto b = unit_inputs();
  const double conf = std::sqrt(2.0 * std::log(20.0) / 1000.0);
  CHECK(confidence_term(b) == doctest::Approx(conf).epsilon(1e-14));
  CHECK(std::abs(bound_gcn(b, 9) - 1.87740) < 1e-5);
  CHECK(bound_gcn(b, 0) == doctest::Approx(conf).epsilon(1e-14));
  CHECK(bound_gcn(b, 18) - conf == doctest::Approx(2 * (bound_gcn(b, 9) - conf)).epsilon(1e-14));
  CHECK(bound_gcn_sqrt(b, 9) == doctest::Approx(2.0 * 3.0 / 10.0 + conf).epsilon(1e-14));

  auto one = b;
  one.m = 1;
  CHECK(std::abs(bound_gat(one, 1, 1) - 2.07740) < 1e-5);
  CHECK(bound_gat(b, 0, 7) == doctest::Approx(conf).epsilon(1e-14));
  CHECK(bound_gat(b, 3, 11) == bound_gat(b, 11, 3));

  CHECK(bound_gat_multihead(b, 13, 5) == bound_gat(b, 13, 5));
  auto four = b;
  four.heads = 4;
  CHECK(bound_gat_multihead(four, 13, 5) - conf == doctest::Approx((bound_gat(b, 13, 5) - conf) / 2).epsilon(1e-14));
  auto eight = b;
  eight.heads = 8;
  // 2 * sqrt(64 * 16 / (100 * 8)) = 2 * sqrt(1.28)
  CHECK(std::abs(bound_gat_multihead(eight, 64, 16) - (2 * std::sqrt(1.28) + conf)) < 1e-5);

  // (8 / 10)(1 + R2 R1)(1 + sqrt 4)
  CHECK(std::abs(bound_gt(b, 4) - (4.8 + conf)) < 1e-5);
  auto no_ffn = b;
  no_ffn.R1 = 1e-12;
  CHECK(std::abs(bound_gt(no_ffn, 4) - (2.4 + conf)) < 1e-5);
  CHECK(bound_gt(b, 0) == doctest::Approx(8.0 / 10.0 * 2.0 + conf).epsilon(1e-14));
}

TEST_CASE("bounds are monotone in their counts and in 1/sqrt(m)") {
  auto b = unit_inputs();
  b.heads = 3;
  for (double eta = 0; eta < 50; eta += 1) {
    CHECK(bound_gcn(b, eta + 1) >= bound_gcn(b, eta));
    CHECK(bound_gat(b, eta + 1, 4) >= bound_gat(b, eta, 4));
    CHECK(bound_gat_multihead(b, 4, eta + 1) >= bound_gat_multihead(b, 4, eta));
    CHECK(bound_gt(b, eta + 1) >= bound_gt(b, eta));
  }
  auto more = b;
  more.m = 400;
  CHECK(bound_gcn(more, 9) <= bound_gcn(b, 9));
  CHECK(bound_gat(more, 9, 9) <= bound_gat(b, 9, 9));
  CHECK(bound_gt(more, 9) <= bound_gt(b, 9));
}

TEST_CASE("bound inputs are validated") {
  auto b = unit_inputs();
  b.delta = 1.0;
  CHECK_THROWS_AS(bound_gcn(b, 1), ValidationError);
  b = unit_inputs();
  b.m = 2000;
  CHECK_THROWS_AS(bound_gcn(b, 1), ValidationError);
  b = unit_inputs();
  b.R1 = 0.0;
  CHECK_THROWS_AS(bound_gat(b, 1, 1), ValidationError);
}

TEST_CASE("usage ratios") {
  std::mt19937_64 rng(2);
  const Graph g = test::random_graph(20, 0.3, 2, 3, rng);
  const auto a = *normalize(g).a_hat;
  const std::vector<int> same(g.n, 1);
  CHECK(cross_class_ratio(a, same) == 0.0);
  CHECK(effective_edge_ratio(a, 1e-2) == 1.0);
  CHECK(effective_edge_ratio(a, 10.0) == 0.0);

  const SparseMatrix two(2, 2, {0, 2, 4}, {0, 1, 0, 1}, {0.5, 0.5, 0.5, 0.5});
  const std::vector<int> opposite{0, 1};
  CHECK(cross_class_ratio(two, opposite) == 1.0);
  CHECK(cross_class_ratio(SparseMatrix::identity(3), std::vector<int>{0, 1, 2}) == 0.0);
  CHECK(effective_edge_ratio(SparseMatrix::identity(3), 1e-2) == 0.0);

  const std::vector<int> labels{0, 1, 2, 0}, pred{2, 2, 2, 2};
  const std::vector<std::uint8_t> train{1, 0, 1, 0};
  CHECK(node_classes(labels, train, pred) == std::vector<int>{0, 2, 2, 2});

  CHECK(generalization_gap(0.1, 0.1) == 0.0);
  CHECK(generalization_gap(0.05, 0.20) == doctest::Approx(0.15));
  CHECK(generalization_gap(0.3, 0.1) == doctest::Approx(0.2));
}

TEST_CASE("measured bound constants") {
  std::mt19937_64 rng(3);
  const Graph g = test::random_graph(15, 0.3, 6, 3, rng);
  const auto ctx = make_context(g);
  ModelConfig cfg;
  cfg.hidden = 6;
  cfg.dropout = 0.0;
  Model m = init_model(cfg, 6, 3, g.edges.size(), rng);
  auto measure = [&](const Model& model) {
    ad::Tape t;
    const auto rec = evaluate_forward(model, ctx, t);
    return empirical_bound_inputs(model, ctx, rec, 5);
  };

  const auto random = measure(m);
  const auto& net = std::get<GcnModel>(m.net);
  CHECK(random.R1 == doctest::Approx(svd_norm(net.w1)).epsilon(1e-6));
  CHECK(random.R2 == doctest::Approx(svd_norm(net.w2)).epsilon(1e-6));
  CHECK(random.B == doctest::Approx(max_row_norm(g.features)).epsilon(1e-12));
  CHECK(random.m == 5);
  CHECK(random.n == 15);

  auto& w = std::get<GcnModel>(m.net);
  w.w1 = DenseMatrix::identity(6);
  w.w2 = DenseMatrix(6, 3, 0.0);
  const auto fixed = measure(m);
  CHECK(fixed.R1 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(fixed.R2 > 0.0);
  CHECK(fixed.R2 <= 1e-12);

  ModelConfig gt_cfg;
  gt_cfg.arch = Architecture::Gt;
  gt_cfg.hidden = 8;
  gt_cfg.heads = 2;
  gt_cfg.dropout = 0.0;
  const Model gt = init_model(gt_cfg, 6, 3, g.edges.size(), rng);
  const auto gi = measure(gt);
  CHECK(gi.heads == 2);
  CHECK(gi.pi_norm > 0.0);
  CHECK(gi.R0 == doctest::Approx(std::max(svd_norm(std::get<GtModel>(gt.net).layers[0].value[0]),
                                          svd_norm(std::get<GtModel>(gt.net).layers[0].value[1])))
                     .epsilon(1e-6));
}

TEST_CASE("layer norm Jacobian norm matches a numerical Jacobian") {
  std::mt19937_64 rng(4);
  const auto x = test::random_dense(1, 6, rng);
  const auto gain = test::random_dense(1, 6, rng);
  auto ln = [&](const std::vector<double>& v) {
    double mu = 0.0, var = 0.0;
    for (double a : v) mu += a;
    mu /= 6.0;
    for (double a : v) var += (a - mu) * (a - mu);
    var /= 6.0;
    std::vector<double> out(6);
    for (std::size_t i = 0; i < 6; ++i) out[i] = gain(0, i) * (v[i] - mu) / std::sqrt(var + 1e-5);
    return out;
  };
  DenseMatrix jac(6, 6);
  for (std::size_t j = 0; j < 6; ++j) {
    std::vector<double> up(x.values()), down(x.values());
    up[j] += 1e-6;
    down[j] -= 1e-6;
    const auto fu = ln(up), fd = ln(down);
    for (std::size_t i = 0; i < 6; ++i) jac(i, j) = (fu[i] - fd[i]) / 2e-6;
  }
  CHECK(layer_norm_jacobian_norm(x.values(), gain.values()) == doctest::Approx(svd_norm(jac)).epsilon(1e-5));
}

TEST_CASE("complexity report and bounds for each architecture") {
  std::mt19937_64 rng(5);
  const Graph g = test::random_graph(16, 0.3, 4, 2, rng);
  const auto ctx = make_context(g);
  for (auto arch : {Architecture::Gcn, Architecture::Gat, Architecture::Gt}) {
    ModelConfig cfg;
    cfg.arch = arch;
    cfg.hidden = 8;
    cfg.heads = 2;
    cfg.dropout = 0.0;
    const Model m = init_model(cfg, 4, 2, g.edges.size(), rng);
    ad::Tape t;
    const auto rec = evaluate_forward(m, ctx, t);
    const auto report = evaluate_bounds(m, ctx, rec, g.labels, 6);
    CHECK(report.complexity.eta == 2 * g.edges.size() + g.n);
    for (const auto& layer : report.complexity.eta_tau)
      for (auto c : layer) CHECK(c <= report.complexity.eta);
    for (double r : report.complexity.effective_edge_ratio) CHECK((r >= 0.0 && r <= 1.0));
    CHECK_FALSE(report.bounds.empty());
    for (const auto& b : report.bounds) CHECK((std::isfinite(b.gap) && b.gap > 0.0));
  }
}
