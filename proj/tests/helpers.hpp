#pragma once

#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "sgnn/graph.hpp"
#include "sgnn/tensor.hpp"

namespace sgnn::test {

inline DenseMatrix random_dense(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  DenseMatrix m(r, c);
  for (auto& v : m.values()) v = nd(rng);
  return m;
}

inline SparseMatrix random_sparse(std::size_t r, std::size_t c, double density, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  DenseMatrix d(r, c);
  for (auto& v : d.values())
    if (u(rng) < density) v = nd(rng);
  return SparseMatrix::from_dense(d);
}

// Erdos-Renyi graph with random labels and Gaussian features.
inline Graph random_graph(std::size_t n, double p, std::size_t d, std::size_t classes, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (u(rng) < p) pairs.emplace_back(i, j);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % classes);
  return make_graph(n, pairs, random_dense(n, d, rng), std::move(labels), classes);
}

inline Graph complete_graph(std::size_t n, DenseMatrix x, std::vector<int> labels, std::size_t classes) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  return make_graph(n, pairs, std::move(x), std::move(labels), classes);
}

inline bool connected(const Graph& g) {
  std::vector<std::vector<std::size_t>> adj(g.n);
  for (const auto& e : g.edges) {
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  std::vector<char> seen(g.n, 0);
  std::vector<std::size_t> stack{0};
  seen[0] = 1;
  std::size_t count = 1;
  while (!stack.empty()) {
    const auto u = stack.back();
    stack.pop_back();
    for (auto v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        ++count;
        stack.push_back(v);
      }
  }
  return count == g.n;
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

inline DenseMatrix dense_matmul(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

}  // namespace sgnn::test
