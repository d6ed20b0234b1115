#include "sgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "sgnn/errors.hpp"

namespace sgnn {

void Graph::validate() const {
  if (features.rows() != n) throw ValidationError("graph: feature rows != node count");
  if (labels.size() != n) throw ValidationError("graph: label count != node count");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw ValidationError("graph: label out of range");
    }
  }
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    if (e.u >= e.v) throw ValidationError("graph: edge not canonical or a self-loop");
    if (e.v >= n) throw ValidationError("graph: edge endpoint out of range");
    if (i > 0 && !(edges[i - 1] < e)) throw ValidationError("graph: edges unsorted or duplicated");
  }
  if (!features.all_finite()) throw ValidationError("graph: non-finite feature");
  const bool any_mask = !train_mask.empty() || !val_mask.empty() || !test_mask.empty();
  if (any_mask) {
    if (train_mask.size() != n || val_mask.size() != n || test_mask.size() != n) {
      throw ValidationError("graph: mask lengths must equal node count");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (train_mask[i] + val_mask[i] + test_mask[i] > 1) {
        throw ValidationError("graph: masks overlap at node " + std::to_string(i));
      }
    }
  }
}

Graph make_graph(std::size_t n, std::span<const std::pair<std::size_t, std::size_t>> pairs,
                 DenseMatrix features, std::vector<int> labels, std::size_t num_classes) {
  Graph g;
  g.n = n;
  g.features = std::move(features);
  g.labels = std::move(labels);
  g.num_classes = num_classes;
  g.edges.reserve(pairs.size());
  for (const auto& [a, b] : pairs) {
    if (a == b) throw ValidationError("make_graph: self-loop at node " + std::to_string(a));
    if (a >= n || b >= n) throw ValidationError("make_graph: edge endpoint out of range");
    g.edges.push_back(Edge{static_cast<std::uint32_t>(std::min(a, b)),
                           static_cast<std::uint32_t>(std::max(a, b))});
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  g.validate();
  return g;
}

SparseMatrix adjacency(const Graph& g, bool self_loops) {
  std::vector<Triplet> t;
  t.reserve(2 * g.edges.size() + (self_loops ? g.n : 0));
  for (const auto& e : g.edges) {
    t.push_back({e.u, e.v, 1.0});
    t.push_back({e.v, e.u, 1.0});
  }
  if (self_loops)
    for (std::size_t i = 0; i < g.n; ++i) t.push_back({i, i, 1.0});
  return SparseMatrix::from_triplets(g.n, g.n, std::move(t));
}

SparseMatrix feature_matrix(const Graph& g) { return SparseMatrix::from_dense(g.features); }

NormalizedOps normalize(const Graph& g) {
  if (g.n == 0) throw ValidationError("normalize: graph has no nodes");
  std::vector<double> deg(g.n, 0.0);
  for (const auto& e : g.edges) {
    deg[e.u] += 1.0;
    deg[e.v] += 1.0;
  }
  std::vector<Triplet> t;
  t.reserve(2 * g.edges.size() + g.n);
  // Encode the undirected edge id in the value slot so it survives sorting.
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    t.push_back({g.edges[i].u, g.edges[i].v, static_cast<double>(i)});
    t.push_back({g.edges[i].v, g.edges[i].u, static_cast<double>(i)});
  }
  for (std::size_t i = 0; i < g.n; ++i) t.push_back({i, i, -1.0});
  SparseMatrix pattern = SparseMatrix::from_triplets(g.n, g.n, std::move(t));

  auto ids = std::make_shared<std::vector<std::int64_t>>(pattern.nnz());
  std::vector<double> a_vals(pattern.nnz());
  std::vector<double> l_vals(pattern.nnz());
  const auto& off = pattern.offsets();
  const auto& idx = pattern.indices();
  for (std::size_t r = 0; r < g.n; ++r) {
    for (std::size_t e = off[r]; e < off[r + 1]; ++e) {
      const std::size_t c = idx[e];
      (*ids)[e] = static_cast<std::int64_t>(pattern.values()[e]);
      const double a = 1.0 / std::sqrt((deg[r] + 1.0) * (deg[c] + 1.0));
      a_vals[e] = a;
      l_vals[e] = (r == c ? 1.0 : 0.0) - a;
    }
  }
  NormalizedOps ops;
  ops.a_hat = std::make_shared<SparseMatrix>(pattern.with_values(std::move(a_vals)));
  ops.l_tilde = std::make_shared<SparseMatrix>(pattern.with_values(std::move(l_vals)));
  ops.degrees = std::move(deg);
  ops.edge_id = std::move(ids);
  return ops;
}

SparseMatrix random_walk_operator(const Graph& g) {
  SparseMatrix a = adjacency(g, true);
  std::vector<double> vals = a.values();
  const auto& off = a.offsets();
  for (std::size_t r = 0; r < g.n; ++r) {
    const double deg = static_cast<double>(off[r + 1] - off[r]);
    for (std::size_t e = off[r]; e < off[r + 1]; ++e) vals[e] = 1.0 / deg;
  }
  return a.with_values(std::move(vals));
}

double dirichlet_energy(const SparseMatrix& l_tilde, const DenseMatrix& h) {
  if (l_tilde.rows() != h.rows() || l_tilde.cols() != h.rows()) {
    throw ShapeError("dirichlet_energy: Laplacian is " + std::to_string(l_tilde.rows()) + "x" +
                     std::to_string(l_tilde.cols()) + " but H has " + std::to_string(h.rows()) +
                     " rows");
  }
  return trace_inner(h, spmm(l_tilde, h));
}

SpectralEnergy spectral_energy_identity_check(const Graph& g, std::span<const double> f) {
  if (g.n > kMaxEigenDim) throw SizeError("spectral_energy_identity_check: graph too large");
  if (f.size() != g.n) throw ShapeError("spectral_energy_identity_check: signal length != n");
  const auto ops = normalize(g);
  const DenseMatrix fv = DenseMatrix::column(f);
  SpectralEnergy out;
  out.direct = dirichlet_energy(*ops.l_tilde, fv);
  const auto eig = jacobi_eigh(ops.l_tilde->to_dense());
  const DenseMatrix gamma = matmul_tn(eig.vectors, fv);
  for (std::size_t i = 0; i < g.n; ++i) out.spectral += eig.values[i] * gamma(i, 0) * gamma(i, 0);
  return out;
}

ContractionCheck energy_contraction_check(const Graph& g, const DenseMatrix& w1) {
  const auto ops = normalize(g);
  return energy_contraction_check(g, w1, *ops.a_hat);
}

ContractionCheck energy_contraction_check(const Graph& g, const DenseMatrix& w1,
                                          const SparseMatrix& propagation) {
  if (propagation.rows() != g.n || propagation.cols() != g.n) {
    throw ShapeError("energy_contraction_check: propagation must be n x n");
  }
  const auto ops = normalize(g);
  const DenseMatrix xw = matmul(g.features, w1);
  ContractionCheck out;
  out.e_mlp = dirichlet_energy(*ops.l_tilde, xw);
  out.e_gnn = dirichlet_energy(*ops.l_tilde, spmm(propagation, xw));
  out.propagation_norm = spectral_norm(propagation).value;
  out.bound = out.propagation_norm * out.propagation_norm * out.e_mlp;
  out.holds = out.e_gnn <= out.bound + 1e-9 * std::max(1.0, out.bound);
  return out;
}

Graph sbm_generate(const SbmParams& params, std::uint64_t seed) {
  if (params.blocks.empty()) throw ValidationError("sbm_generate: no blocks");
  for (auto b : params.blocks)
    if (b == 0) throw ValidationError("sbm_generate: empty block");
  if (!(0.0 <= params.p_out && params.p_out <= params.p_in && params.p_in <= 1.0)) {
    throw ValidationError("sbm_generate: need 0 <= p_out <= p_in <= 1");
  }
  std::mt19937_64 rng(seed);
  const std::size_t c = params.blocks.size();
  const std::size_t n = std::accumulate(params.blocks.begin(), params.blocks.end(), std::size_t{0});
  std::vector<int> labels;
  labels.reserve(n);
  for (std::size_t b = 0; b < c; ++b) labels.insert(labels.end(), params.blocks[b], static_cast<int>(b));

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = labels[i] == labels[j] ? params.p_in : params.p_out;
      if (unif(rng) < p) pairs.emplace_back(i, j);
    }

  const std::size_t d = params.feature_dim;
  std::normal_distribution<double> normal(0.0, 1.0);
  DenseMatrix means(c, d);
  for (std::size_t k = 0; k < c; ++k) {
    double norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      means(k, j) = normal(rng);
      norm += means(k, j) * means(k, j);
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < d; ++j) means(k, j) *= params.feature_separation / norm;
  }
  DenseMatrix x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      x(i, j) = means(static_cast<std::size_t>(labels[i]), j) + normal(rng);

  Graph g = make_graph(n, pairs, std::move(x), std::move(labels), c);
  g.name = "sbm";
  return g;
}

Graph edge_subsample(const Graph& g, double keep_fraction, std::uint64_t seed) {
  if (!(keep_fraction >= 0.0 && keep_fraction <= 1.0)) {
    throw ValidationError("edge_subsample: keep_fraction must be in [0, 1]");
  }
  const auto keep = static_cast<std::size_t>(
      std::llround(keep_fraction * static_cast<double>(g.edges.size())));
  std::vector<std::size_t> order(g.edges.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(keep);
  std::sort(order.begin(), order.end());
  Graph out = g;
  out.edges.clear();
  for (auto i : order) out.edges.push_back(g.edges[i]);
  return out;
}

Graph add_cross_class_edges(const Graph& g, std::size_t count, std::uint64_t seed) {
  if (g.num_classes < 2) throw ValidationError("add_cross_class_edges: need two classes");
  std::set<Edge> present(g.edges.begin(), g.edges.end());
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, g.n - 1);
  std::size_t added = 0;
  std::size_t attempts = 0;
  while (added < count) {
    if (++attempts > 100 * (count + 10)) throw ValidationError("add_cross_class_edges: graph saturated");
    const auto a = pick(rng);
    const auto b = pick(rng);
    if (a == b || g.labels[a] == g.labels[b]) continue;
    const Edge e{static_cast<std::uint32_t>(std::min(a, b)), static_cast<std::uint32_t>(std::max(a, b))};
    if (present.insert(e).second) ++added;
  }
  Graph out = g;
  out.edges.assign(present.begin(), present.end());
  return out;
}

Graph citation_like_generate(const CitationLikeParams& p, std::uint64_t seed) {
  const std::size_t c = p.class_sizes.size();
  if (c < 2) throw ValidationError("citation_like_generate: need at least two classes");
  if (p.topic_words * c > p.vocabulary) {
    throw ValidationError("citation_like_generate: topic vocabularies exceed the vocabulary");
  }
  const std::size_t n = std::accumulate(p.class_sizes.begin(), p.class_sizes.end(), std::size_t{0});
  std::vector<int> labels;
  for (std::size_t k = 0; k < c; ++k) labels.insert(labels.end(), p.class_sizes[k], static_cast<int>(k));

  double intra_pairs = 0.0;
  for (auto s : p.class_sizes) intra_pairs += 0.5 * static_cast<double>(s) * static_cast<double>(s - 1);
  const double all_pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  const double inter_pairs = all_pairs - intra_pairs;
  const double m = static_cast<double>(p.target_edges);
  const double p_in = std::min(1.0, p.homophily * m / intra_pairs);
  const double p_out = std::min(1.0, (1.0 - p.homophily) * m / inter_pairs);

  std::mt19937_64 rng(seed);
  // Geometric skipping keeps generation linear in the edge count.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  auto sample_block = [&](std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1,
                          bool triangle, double prob) {
    if (prob <= 0.0) return;
    std::geometric_distribution<std::size_t> skip(prob);
    const std::size_t rows = r1 - r0;
    const std::size_t cols = c1 - c0;
    const std::size_t total = triangle ? rows * (rows - 1) / 2 : rows * cols;
    std::size_t pos = skip(rng);
    while (pos < total) {
      if (triangle) {
        // Row-major upper triangle of a rows x rows block.
        std::size_t i = 0;
        std::size_t rem = pos;
        while (rem >= rows - 1 - i) {
          rem -= rows - 1 - i;
          ++i;
        }
        pairs.emplace_back(r0 + i, r0 + i + 1 + rem);
      } else {
        pairs.emplace_back(r0 + pos / cols, c0 + pos % cols);
      }
      pos += 1 + skip(rng);
    }
  };
  std::vector<std::size_t> start(c + 1, 0);
  for (std::size_t k = 0; k < c; ++k) start[k + 1] = start[k] + p.class_sizes[k];
  for (std::size_t a = 0; a < c; ++a) {
    sample_block(start[a], start[a + 1], start[a], start[a + 1], true, p_in);
    for (std::size_t b = a + 1; b < c; ++b)
      sample_block(start[a], start[a + 1], start[b], start[b + 1], false, p_out);
  }

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> any_word(0, p.vocabulary - 1);
  std::uniform_int_distribution<std::size_t> topic_word(0, p.topic_words - 1);
  DenseMatrix x(n, p.vocabulary);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(labels[i]);
    for (std::size_t w = 0; w < p.words_per_node; ++w) {
      const std::size_t word =
          unif(rng) < p.topic_probability ? k * p.topic_words + topic_word(rng) : any_word(rng);
      x(i, word) = 1.0;
    }
    double row = 0.0;
    for (std::size_t j = 0; j < p.vocabulary; ++j) row += x(i, j);
    for (std::size_t j = 0; j < p.vocabulary; ++j) x(i, j) /= row;
  }
  Graph g = make_graph(n, pairs, std::move(x), std::move(labels), c);
  g.name = "citation-like";
  return g;
}

double edge_homophily(const Graph& g) {
  if (g.edges.empty()) return 0.0;
  std::size_t same = 0;
  for (const auto& e : g.edges) same += g.labels[e.u] == g.labels[e.v];
  return static_cast<double>(same) / static_cast<double>(g.edges.size());
}

}  // namespace sgnn
