#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "sgnn/errors.hpp"
#include "sgnn/models.hpp"

using namespace sgnn;

namespace {

using Pairs = std::vector<std::pair<std::size_t, std::size_t>>;

DenseMatrix relu(DenseMatrix m) {
  for (auto& v : m.values()) v = std::max(v, 0.0);
  return m;
}

DenseMatrix logits_of(const Model& m, const GraphContext& ctx) {
  ad::Tape t;
  return evaluate_forward(m, ctx, t).logits.value();
}

ModelConfig config(Architecture arch, std::size_t hidden, std::size_t heads) {
  ModelConfig c;
  c.arch = arch;
  c.hidden = hidden;
  c.heads = heads;
  c.dropout = 0.0;
  return c;
}

// Dense attention over {v} and its neighbors: softmax of score(v, u) per row.
template <class Score>
DenseMatrix dense_attention(const DenseMatrix& adj_self, Score score) {
  const std::size_t n = adj_self.rows();
  DenseMatrix a(n, n);
  for (std::size_t v = 0; v < n; ++v) {
    double mx = -1e300;
    for (std::size_t u = 0; u < n; ++u)
      if (adj_self(v, u) != 0.0) mx = std::max(mx, score(v, u));
    double s = 0.0;
    for (std::size_t u = 0; u < n; ++u)
      if (adj_self(v, u) != 0.0) s += a(v, u) = std::exp(score(v, u) - mx);
    for (std::size_t u = 0; u < n; ++u) a(v, u) /= s;
  }
  return a;
}

DenseMatrix gat_head_dense(const DenseMatrix& adj_self, const DenseMatrix& h, const GatHead& head, double slope) {
  const auto z = test::dense_matmul(h, head.weight);
  const auto a = dense_attention(adj_self, [&](std::size_t v, std::size_t u) {
    return gat_score(h.row(v), h.row(u), head, slope);
  });
  return test::dense_matmul(a, z);
}

DenseMatrix layer_norm_dense(const DenseMatrix& x, const DenseMatrix& gain, const DenseMatrix& bias) {
  DenseMatrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mu = 0.0, var = 0.0;
    for (double v : x.row(r)) mu += v;
    mu /= static_cast<double>(x.cols());
    for (double v : x.row(r)) var += (v - mu) * (v - mu);
    var /= static_cast<double>(x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c)
      out(r, c) = (x(r, c) - mu) / std::sqrt(var + 1e-5) * gain(0, c) + bias(0, c);
  }
  return out;
}

DenseMatrix gt_dense(const GtModel& net, const DenseMatrix& adj_self, const DenseMatrix& x, std::size_t heads) {
  DenseMatrix h = test::dense_matmul(x, net.embed);
  for (const auto& layer : net.layers) {
    DenseMatrix concat(h.rows(), 0);
    std::vector<DenseMatrix> outs;
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const auto a = dense_attention(adj_self, [&](std::size_t v, std::size_t u) {
        return gt_score(h.row(v), h.row(u), layer.query[hd], layer.key[hd]);
      });
      outs.push_back(test::dense_matmul(a, test::dense_matmul(h, layer.value[hd])));
    }
    const std::size_t dh = outs[0].cols();
    DenseMatrix cat(h.rows(), dh * heads);
    for (std::size_t hd = 0; hd < heads; ++hd)
      for (std::size_t r = 0; r < h.rows(); ++r)
        for (std::size_t c = 0; c < dh; ++c) cat(r, hd * dh + c) = outs[hd](r, c);
    const auto mid = layer_norm_dense(h + test::dense_matmul(cat, layer.output), layer.norm1_gain, layer.norm1_bias);
    const auto ffn = test::dense_matmul(relu(test::dense_matmul(mid, layer.ffn_in)), layer.ffn_out);
    h = layer_norm_dense(mid + ffn, layer.norm2_gain, layer.norm2_bias);
  }
  return test::dense_matmul(h, net.classifier);
}

Graph permuted(const Graph& g, const std::vector<std::size_t>& p) {
  Pairs pairs;
  for (const auto& e : g.edges) pairs.emplace_back(p[e.u], p[e.v]);
  DenseMatrix x(g.n, g.feature_dim());
  std::vector<int> labels(g.n);
  for (std::size_t i = 0; i < g.n; ++i) {
    for (std::size_t c = 0; c < x.cols(); ++c) x(p[i], c) = g.features(i, c);
    labels[p[i]] = g.labels[i];
  }
  return make_graph(g.n, pairs, std::move(x), std::move(labels), g.num_classes);
}

}  // namespace

TEST_CASE("GCN matches a dense reference") {
  std::mt19937_64 rng(1);
  const Graph g = test::random_graph(18, 0.25, 5, 3, rng);
  const auto ctx = make_context(g);
  const Model m = init_model(config(Architecture::Gcn, 7, 1), 5, 3, g.edges.size(), rng);
  const auto& net = std::get<GcnModel>(m.net);
  const auto a = normalize(g).a_hat->to_dense();
  const auto expected = test::dense_matmul(a, test::dense_matmul(relu(test::dense_matmul(a, test::dense_matmul(g.features, net.w1))), net.w2));
  CHECK(test::max_abs_diff(logits_of(m, ctx), expected) < 1e-10);

  ad::Tape t;
  const auto rec = evaluate_forward(m, ctx, t);
  CHECK(test::max_abs_diff(rec.omega_matrix(0).to_dense(), a) == 0.0);
}

TEST_CASE("masked GCN propagation follows the mask") {
  std::mt19937_64 rng(2);
  const Graph g = test::random_graph(15, 0.3, 4, 2, rng);
  const auto ctx = make_context(g);
  const auto a = normalize(g).a_hat->to_dense();
  for (bool renorm : {true, false}) {
    auto cfg = config(Architecture::Gcn, 5, 1);
    cfg.edge_mask = true;
    cfg.mask_renormalize = renorm;
    Model m = init_model(cfg, 4, 2, g.edges.size(), rng);
    auto& logits = *std::get<GcnModel>(m.net).mask_logits;
    std::normal_distribution<double> nd;
    for (auto& v : logits.values()) v = nd(rng);
    const auto mask = edge_mask_values(m);

    DenseMatrix w = a;
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      w(g.edges[e].u, g.edges[e].v) *= mask[e];
      w(g.edges[e].v, g.edges[e].u) *= mask[e];
    }
    if (renorm) {
      for (std::size_t v = 0; v < g.n; ++v) {
        double target = 0.0, have = 0.0;
        for (std::size_t u = 0; u < g.n; ++u) {
          target += a(v, u);
          have += w(v, u);
        }
        for (std::size_t u = 0; u < g.n; ++u) w(v, u) *= target / have;
      }
    }
    ad::Tape t;
    const auto rec = evaluate_forward(m, ctx, t);
    CHECK(test::max_abs_diff(rec.omega_matrix(0).to_dense(), w) < 1e-14);
    const auto& net = std::get<GcnModel>(m.net);
    const auto expected = test::dense_matmul(w, test::dense_matmul(relu(test::dense_matmul(w, test::dense_matmul(g.features, net.w1))), net.w2));
    CHECK(test::max_abs_diff(rec.logits.value(), expected) < 1e-10);
  }
}

TEST_CASE("GCN examples") {
  SUBCASE("no edges, identity weights, nonnegative features") {
    std::mt19937_64 rng(3);
    DenseMatrix x = test::random_dense(4, 3, rng);
    for (auto& v : x.values()) v = std::abs(v);
    const Graph g = make_graph(4, Pairs{}, x, {0, 1, 2, 0}, 3);
    Model m = init_model(config(Architecture::Gcn, 3, 1), 3, 3, 0, rng);
    std::get<GcnModel>(m.net).w1 = DenseMatrix::identity(3);
    ad::Tape t;
    const auto rec = evaluate_forward(m, make_context(g), t);
    CHECK(test::max_abs_diff(rec.hidden[0].value(), x) < 1e-15);
  }
  SUBCASE("K3 with identical rows") {
    std::mt19937_64 rng(4);
    const Graph g = test::complete_graph(3, DenseMatrix(3, 4, 0.7), {0, 1, 1}, 2);
    const Model m = init_model(config(Architecture::Gcn, 6, 1), 4, 2, g.edges.size(), rng);
    const auto l = logits_of(m, make_context(g));
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(l(1, c) == doctest::Approx(l(0, c)).epsilon(1e-14));
      CHECK(l(2, c) == doctest::Approx(l(0, c)).epsilon(1e-14));
    }
  }
}

TEST_CASE("GAT matches a dense reference") {
  std::mt19937_64 rng(5);
  const Graph g = test::random_graph(16, 0.25, 5, 3, rng);
  const auto ctx = make_context(g);
  auto cfg = config(Architecture::Gat, 6, 3);
  cfg.output_heads = 2;
  const Model m = init_model(cfg, 5, 3, g.edges.size(), rng);
  const auto& net = std::get<GatModel>(m.net);
  const auto adj = adjacency(g, true).to_dense();

  DenseMatrix h1(g.n, 6);
  for (std::size_t hd = 0; hd < 3; ++hd) {
    const auto o = gat_head_dense(adj, g.features, net.layer1[hd], cfg.attention_slope);
    for (std::size_t r = 0; r < g.n; ++r)
      for (std::size_t c = 0; c < 2; ++c) h1(r, hd * 2 + c) = o(r, c);
  }
  h1 = relu(h1);
  DenseMatrix expected = gat_head_dense(adj, h1, net.layer2[0], cfg.attention_slope);
  expected += gat_head_dense(adj, h1, net.layer2[1], cfg.attention_slope);
  expected *= 0.5;
  CHECK(test::max_abs_diff(logits_of(m, ctx), expected) < 1e-10);
}

TEST_CASE("GAT attention properties") {
  std::mt19937_64 rng(6);
  const Graph g = test::random_graph(20, 0.2, 4, 2, rng);
  const auto ctx = make_context(g);
  const Model m = init_model(config(Architecture::Gat, 8, 4), 4, 2, g.edges.size(), rng);
  ad::Tape t;
  const auto rec = evaluate_forward(m, ctx, t);
  for (std::size_t layer = 0; layer < 2; ++layer)
    for (std::size_t hd = 0; hd < rec.omega_heads[layer].size(); ++hd) {
      const auto a = rec.omega_head_matrix(layer, hd);
      for (std::size_t v = 0; v < g.n; ++v) {
        double s = 0.0;
        for (auto e = a.offsets()[v]; e < a.offsets()[v + 1]; ++e) {
          CHECK(a.values()[e] >= 0.0);
          s += a.values()[e];
        }
        CHECK(std::abs(s - 1.0) < 1e-9);
      }
    }

  SUBCASE("identical features give uniform attention") {
    const Graph same = make_graph(g.n, [&] {
      Pairs p;
      for (const auto& e : g.edges) p.emplace_back(e.u, e.v);
      return p;
    }(), DenseMatrix(g.n, 4, 0.3), g.labels, 2);
    ad::Tape t2;
    const auto r2 = evaluate_forward(m, make_context(same), t2);
    const auto a = r2.omega_head_matrix(0, 1);
    for (std::size_t v = 0; v < g.n; ++v) {
      const auto deg = a.offsets()[v + 1] - a.offsets()[v];
      for (auto e = a.offsets()[v]; e < a.offsets()[v + 1]; ++e)
        CHECK(a.values()[e] == doctest::Approx(1.0 / static_cast<double>(deg)).epsilon(1e-12));
    }
  }
}

TEST_CASE("single-head GAT with zero attention vectors is random-walk GCN") {
  std::mt19937_64 rng(7);
  const Graph g = test::random_graph(17, 0.25, 4, 3, rng);
  auto cfg = config(Architecture::Gat, 5, 1);
  Model m = init_model(cfg, 4, 3, g.edges.size(), rng);
  auto& net = std::get<GatModel>(m.net);
  for (auto* head : {&net.layer1[0], &net.layer2[0]}) {
    head->att_dst.fill(0.0);
    head->att_src.fill(0.0);
  }
  const auto p = random_walk_operator(g).to_dense();
  const auto expected = test::dense_matmul(
      p, test::dense_matmul(relu(test::dense_matmul(p, test::dense_matmul(g.features, net.layer1[0].weight))),
                            net.layer2[0].weight));
  CHECK(test::max_abs_diff(logits_of(m, make_context(g)), expected) < 1e-10);
}

TEST_CASE("attention scores by hand") {
  GatHead head;
  head.weight = DenseMatrix{{1, 0}, {0, 2}};
  head.att_dst = DenseMatrix{{1}, {-1}};
  head.att_src = DenseMatrix{{0.5}, {1}};
  const std::vector<double> hv{1, 2}, hu{3, -1};
  // z_v = (1, 4), z_u = (3, -2); s = (1 - 4) + (1.5 - 2) = -3.5
  CHECK(gat_score(hv, hu, head, 0.2) == doctest::Approx(-0.7));
  head.att_dst = DenseMatrix{{1}, {1}};
  CHECK(gat_score(hv, hu, head, 0.2) == doctest::Approx(4.5));
  head.att_dst.fill(0.0);
  head.att_src.fill(0.0);
  CHECK(gat_score(hv, hu, head, 0.2) == 0.0);

  const DenseMatrix q{{1, 0}, {0, 1}}, k{{2, 0}, {0, 1}};
  // q = (1, 2), k = (6, -1); (6 - 2) / sqrt 2
  CHECK(gt_score(hv, hu, q, k) == doctest::Approx(4.0 / std::sqrt(2.0)));
  CHECK(gt_score(hv, hu, DenseMatrix(2, 2, 0.0), k) == 0.0);
}

TEST_CASE("GT matches a dense reference in both scopes") {
  std::mt19937_64 rng(8);
  const Graph g = test::random_graph(12, 0.3, 5, 3, rng);
  const Model m = init_model(config(Architecture::Gt, 8, 2), 5, 3, g.edges.size(), rng);
  const auto& net = std::get<GtModel>(m.net);
  CHECK(test::max_abs_diff(logits_of(m, make_context(g)), gt_dense(net, adjacency(g, true).to_dense(), g.features, 2)) < 1e-10);

  auto gcfg = m.config;
  gcfg.scope = AttentionScope::Global;
  Model global = m;
  global.config = gcfg;
  CHECK(test::max_abs_diff(logits_of(global, make_context(g, true)), gt_dense(net, DenseMatrix(g.n, g.n, 1.0), g.features, 2)) < 1e-10);
  CHECK_THROWS_AS(logits_of(global, make_context(g)), StateError);
}

TEST_CASE("GT examples") {
  std::mt19937_64 rng(9);
  SUBCASE("zero value and output projections remove the attention branch") {
    const Graph g = test::random_graph(10, 0.3, 4, 2, rng);
    auto cfg = config(Architecture::Gt, 4, 2);
    cfg.gt_layers = 1;
    Model m = init_model(cfg, 4, 2, g.edges.size(), rng);
    auto& net = std::get<GtModel>(m.net);
    for (auto& v : net.layers[0].value) v.fill(0.0);
    net.layers[0].output.fill(0.0);
    ad::Tape t;
    const auto rec = evaluate_forward(m, make_context(g), t);
    const auto& l = net.layers[0];
    const auto x = test::dense_matmul(g.features, net.embed);
    const auto mid = layer_norm_dense(x, l.norm1_gain, l.norm1_bias);
    const auto h = layer_norm_dense(mid + test::dense_matmul(relu(test::dense_matmul(mid, l.ffn_in)), l.ffn_out), l.norm2_gain, l.norm2_bias);
    CHECK(test::max_abs_diff(rec.hidden[0].value(), h) < 1e-12);
  }
  SUBCASE("single node attends to itself") {
    const Graph g = make_graph(1, Pairs{}, DenseMatrix{{0.3, -1.0}}, {0}, 1);
    const Model m = init_model(config(Architecture::Gt, 4, 2), 2, 1, 0, rng);
    ad::Tape t;
    const auto rec = evaluate_forward(m, make_context(g), t);
    for (const auto& a : rec.omega_heads[0]) CHECK(a.value()(0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("scopes coincide on a complete graph") {
    const Graph g = test::complete_graph(9, test::random_dense(9, 5, rng), {0, 1, 2, 0, 1, 2, 0, 1, 2}, 3);
    Model m = init_model(config(Architecture::Gt, 8, 4), 5, 3, g.edges.size(), rng);
    const auto local = logits_of(m, make_context(g, true));
    m.config.scope = AttentionScope::Global;
    CHECK(test::max_abs_diff(local, logits_of(m, make_context(g, true))) < 1e-10);
  }
  SUBCASE("zero queries give uniform attention") {
    const Graph g = test::random_graph(10, 0.3, 4, 2, rng);
    Model m = init_model(config(Architecture::Gt, 4, 2), 4, 2, g.edges.size(), rng);
    for (auto& q : std::get<GtModel>(m.net).layers[0].query) q.fill(0.0);
    ad::Tape t;
    const auto rec = evaluate_forward(m, make_context(g), t);
    const auto a = rec.omega_head_matrix(0, 0);
    for (std::size_t v = 0; v < g.n; ++v) {
      const auto deg = a.offsets()[v + 1] - a.offsets()[v];
      for (auto e = a.offsets()[v]; e < a.offsets()[v + 1]; ++e)
        CHECK(a.values()[e] == doctest::Approx(1.0 / static_cast<double>(deg)).epsilon(1e-12));
    }
  }
}

TEST_CASE("all models are permutation equivariant") {
  std::mt19937_64 rng(10);
  for (auto arch : {Architecture::Gcn, Architecture::Gat, Architecture::Gt}) {
    for (int trial = 0; trial < 3; ++trial) {
      const Graph g = test::random_graph(20, 0.2, 4, 3, rng);
      std::vector<std::size_t> perm(g.n);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      const Graph h = permuted(g, perm);
      const Model m = init_model(config(arch, 8, 2), 4, 3, g.edges.size(), rng);
      const auto a = logits_of(m, make_context(g)), b = logits_of(m, make_context(h));
      double worst = 0.0;
      for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t c = 0; c < 3; ++c) worst = std::max(worst, std::abs(a(i, c) - b(perm[i], c)));
      CHECK(worst < 1e-10);
    }
  }
}

TEST_CASE("forward is reproducible and dropout is seeded") {
  std::mt19937_64 rng(11);
  const Graph g = test::random_graph(20, 0.2, 4, 3, rng);
  const auto ctx = make_context(g);
  auto cfg = config(Architecture::Gat, 8, 2);
  cfg.dropout = 0.5;
  const Model m = init_model(cfg, 4, 3, g.edges.size(), rng);
  CHECK(logits_of(m, ctx) == logits_of(m, ctx));
  auto run = [&](std::uint64_t seed) {
    ad::Tape t;
    std::mt19937_64 r(seed);
    return forward(m, ctx, true, t, r).logits.value();
  };
  CHECK(run(1) == run(1));
  CHECK_FALSE(run(1) == run(2));
}

TEST_CASE("initialization and parameter bookkeeping") {
  std::mt19937_64 rng(12);
  auto cfg = config(Architecture::Gcn, 16, 1);
  cfg.edge_mask = true;
  cfg.mask_init = 2.0;
  Model gcn = init_model(cfg, 10, 4, 30, rng);
  CHECK(parameter_count(gcn) == 10 * 16 + 16 * 4 + 30);
  for (double v : edge_mask_values(gcn)) CHECK(v == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
  const auto params = parameters(gcn);
  CHECK(params.size() == 3);
  CHECK(params[0].decay);
  CHECK_FALSE(params[2].decay);

  Model gat = init_model(config(Architecture::Gat, 16, 4), 10, 4, 30, rng);
  CHECK(parameter_count(gat) == 4 * (10 * 4 + 4 + 4) + (16 * 4 + 4 + 4));

  Model gt = init_model(config(Architecture::Gt, 8, 2), 10, 4, 30, rng);
  const std::size_t per_layer = 3 * 8 * 8 + 8 * 8 + 2 * 8 * 16 + 4 * 8;
  CHECK(parameter_count(gt) == 10 * 8 + 2 * per_layer + 8 * 4);

  CHECK_THROWS_AS(init_model(config(Architecture::Gat, 10, 4), 10, 4, 0, rng), ValidationError);
  CHECK_THROWS_AS(init_model(config(Architecture::Gcn, 0, 1), 10, 4, 0, rng), ValidationError);
  const Graph g = test::random_graph(10, 0.3, 3, 2, rng);
  CHECK_THROWS_AS(logits_of(gcn, make_context(g)), ShapeError);
}
