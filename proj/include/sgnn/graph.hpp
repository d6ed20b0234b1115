#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sgnn/tensor.hpp"

namespace sgnn {

using SparsePtr = std::shared_ptr<const SparseMatrix>;

struct Edge {
  std::uint32_t u = 0;  // u < v
  std::uint32_t v = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Undirected node-classification graph. Edges are stored once with u < v and
// never include self-loops; those are added by normalize().
struct Graph {
  std::size_t n = 0;
  std::vector<Edge> edges;
  DenseMatrix features;       // n x d
  std::vector<int> labels;    // class ids in [0, num_classes)
  std::size_t num_classes = 0;
  std::vector<std::uint8_t> train_mask;
  std::vector<std::uint8_t> val_mask;
  std::vector<std::uint8_t> test_mask;
  std::string name;

  std::size_t feature_dim() const { return features.cols(); }
  bool has_masks() const { return train_mask.size() == n; }

  // Throws ValidationError when an invariant is broken.
  void validate() const;
};

// Builds a graph from raw pairs: orientation is canonicalized and duplicates are
// collapsed. Self-loops throw ValidationError.
Graph make_graph(std::size_t n, std::span<const std::pair<std::size_t, std::size_t>> pairs,
                 DenseMatrix features, std::vector<int> labels, std::size_t num_classes);

// 0/1 adjacency (symmetric), optionally with the identity added.
SparseMatrix adjacency(const Graph& g, bool self_loops);

// Node features as CSR, zero entries dropped.
SparseMatrix feature_matrix(const Graph& g);

struct NormalizedOps {
  SparsePtr a_hat;    // D~^{-1/2} (A + I) D~^{-1/2}
  SparsePtr l_tilde;  // I - a_hat, same pattern as a_hat
  std::vector<double> degrees;  // original degrees d_v (without the self-loop)
  // For each stored entry of a_hat: index into Graph::edges, or -1 on the diagonal.
  std::shared_ptr<const std::vector<std::int64_t>> edge_id;
  std::size_t n() const { return a_hat->rows(); }
};

NormalizedOps normalize(const Graph& g);

// Row-normalized A + I (random-walk propagation).
SparseMatrix random_walk_operator(const Graph& g);

// tr(H^T L H).
double dirichlet_energy(const SparseMatrix& l_tilde, const DenseMatrix& h);

struct SpectralEnergy {
  double direct = 0.0;    // f^T L f
  double spectral = 0.0;  // sum_i lambda_i gamma_i^2
};

// Evaluates the Dirichlet energy of f directly and through the eigenbasis of L.
// Throws SizeError above kMaxEigenDim nodes.
SpectralEnergy spectral_energy_identity_check(const Graph& g, std::span<const double> f);

struct ContractionCheck {
  double e_gnn = 0.0;             // E(P X W)
  double e_mlp = 0.0;             // E(X W)
  double propagation_norm = 0.0;  // ||P||_2
  double bound = 0.0;             // ||P||_2^2 * e_mlp
  bool holds = false;             // e_gnn <= bound + 1e-9 (relative to scale)
};

// Linear one-layer comparison of propagated vs. unpropagated energy, using the
// graph's features. The first overload propagates with a_hat.
ContractionCheck energy_contraction_check(const Graph& g, const DenseMatrix& w1);
ContractionCheck energy_contraction_check(const Graph& g, const DenseMatrix& w1,
                                          const SparseMatrix& propagation);

// Stochastic block model with Gaussian class-mean features. Class means are
// random unit directions scaled by feature_separation; noise is N(0, 1).
struct SbmParams {
  std::vector<std::size_t> blocks;
  double p_in = 0.1;
  double p_out = 0.01;
  std::size_t feature_dim = 16;
  double feature_separation = 1.0;
};

Graph sbm_generate(const SbmParams& params, std::uint64_t seed);

// Keeps round(keep_fraction * |E|) edges sampled uniformly without replacement.
Graph edge_subsample(const Graph& g, double keep_fraction, std::uint64_t seed);

// Adds `count` new edges between uniformly chosen nodes of different classes.
Graph add_cross_class_edges(const Graph& g, std::size_t count, std::uint64_t seed);

// Synthetic stand-in for a citation network: class-imbalanced SBM whose edge
// count and edge homophily match the targets in expectation, with sparse binary
// bag-of-words features drawn from per-class topic vocabularies, row-normalized
// to sum to one.
struct CitationLikeParams {
  std::vector<std::size_t> class_sizes;
  std::size_t target_edges = 0;
  double homophily = 0.8;
  std::size_t vocabulary = 1000;
  std::size_t topic_words = 150;     // vocabulary slice owned by each class
  std::size_t words_per_node = 18;
  double topic_probability = 0.3;    // chance a word is drawn from the class topic
};

Graph citation_like_generate(const CitationLikeParams& params, std::uint64_t seed);

// Fraction of edges whose endpoints share a label.
double edge_homophily(const Graph& g);

}  // namespace sgnn
