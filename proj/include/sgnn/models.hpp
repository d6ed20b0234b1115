#pragma once

// GCN, multi-head GAT and Graph Transformer forward passes on an autodiff tape.
// Every forward records the per-layer aggregation weights (edge vectors on the
// self-loop-augmented pattern, or the complete pattern for global attention) so
// complexity measures and the structural entropy term can consume them.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "sgnn/autodiff.hpp"
#include "sgnn/graph.hpp"

namespace sgnn {

enum class Architecture { Gcn, Gat, Gt };
enum class Activation { Relu, LeakyRelu };
enum class AttentionScope { Neighborhood, Global };

std::string_view to_string(Architecture a);
std::string_view to_string(Activation a);
std::string_view to_string(AttentionScope s);
Architecture parse_architecture(std::string_view s);
Activation parse_activation(std::string_view s);
AttentionScope parse_scope(std::string_view s);

struct ModelConfig {
  Architecture arch = Architecture::Gcn;
  std::size_t hidden = 64;        // GCN hidden width; GAT heads*head_dim; GT model width
  std::size_t heads = 8;          // GAT layer-1 heads, GT heads per layer
  std::size_t output_heads = 1;   // GAT layer-2 heads (averaged)
  std::size_t gt_layers = 2;
  double dropout = 0.5;
  double attention_slope = 0.2;   // LeakyReLU slope inside GAT scores
  Activation activation = Activation::Relu;
  double activation_slope = 0.01; // used when activation == LeakyRelu
  bool edge_mask = false;         // learnable GCN edge mask
  bool mask_renormalize = true;   // rescale masked rows to the row mass of A_hat
  double mask_init = 2.0;         // initial mask logit (sigmoid ~ 0.88)
  // When false, the classification loss does not reach the mask logits; only
  // the structural regularizer moves them.
  bool mask_task_gradient = false;
  AttentionScope scope = AttentionScope::Neighborhood;
};

struct GcnModel {
  DenseMatrix w1;  // d x h
  DenseMatrix w2;  // h x c
  std::optional<DenseMatrix> mask_logits;  // |E| x 1, one per undirected edge
};

struct GatHead {
  DenseMatrix weight;   // in x f
  DenseMatrix att_dst;  // f x 1, applied to the receiving node
  DenseMatrix att_src;  // f x 1, applied to the neighbor
};

struct GatModel {
  std::vector<GatHead> layer1;  // concatenated
  std::vector<GatHead> layer2;  // averaged
};

struct GtLayer {
  std::vector<DenseMatrix> query, key, value;  // D x d_head each
  DenseMatrix output;                          // D x D
  DenseMatrix ffn_in;                          // D x 2D
  DenseMatrix ffn_out;                         // 2D x D
  DenseMatrix norm1_gain, norm1_bias;          // 1 x D
  DenseMatrix norm2_gain, norm2_bias;
};

struct GtModel {
  DenseMatrix embed;       // d x D input projection
  std::vector<GtLayer> layers;
  DenseMatrix classifier;  // D x c
};

struct Model {
  ModelConfig config;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::variant<GcnModel, GatModel, GtModel> net;
};

// Named view of one parameter matrix. `decay` marks matrices that receive
// weight decay (weights, not masks, attention vectors or norm parameters).
struct ParamRef {
  std::string name;
  DenseMatrix* value;
  bool decay;
};

// Stable order; used for tape leaves, optimizer state and checkpoints.
std::vector<ParamRef> parameters(Model& m);
std::size_t parameter_count(const Model& m);

// Glorot-uniform weights and attention vectors, unit norm gains, zero norm
// biases; edge mask logits start at cfg.mask_init.
Model init_model(const ModelConfig& cfg, std::size_t input_dim, std::size_t num_classes,
                 std::size_t num_edges, std::mt19937_64& rng);

// Per-graph structures shared by every forward pass.
struct GraphContext {
  NormalizedOps ops;
  SparsePtr features;             // CSR node features
  SparsePtr pattern;              // pattern of A + I (shared with ops.a_hat)
  ad::IndexPtr entry_row;         // row of each pattern entry
  ad::IndexPtr entry_col;         // column of each pattern entry
  DenseMatrix diagonal_entries;   // nnz x 1, 1 on self-loop entries
  DenseMatrix a_hat_values;       // nnz x 1
  DenseMatrix a_hat_row_mass;     // n x 1, row sums of A_hat
  SparsePtr complete;             // all n*n entries; only built for global attention
  ad::IndexPtr complete_row;
  ad::IndexPtr complete_col;
  std::size_t num_edges = 0;      // undirected edges of the source graph
};

GraphContext make_context(const Graph& g, bool with_complete_pattern = false);

struct ForwardRecord {
  ad::Var logits;
  std::vector<ad::Var> hidden;  // layer outputs H^(k) before the classifier
  // Aggregation weights per layer (head mean for attention), nnz x 1 on patterns[k].
  std::vector<ad::Var> omega;
  // Per-head attention weights per layer (GCN: a single entry equal to omega).
  std::vector<std::vector<ad::Var>> omega_heads;
  std::vector<SparsePtr> patterns;
  std::vector<ad::Var> params;  // tape leaves in parameters() order
  // GT only: inputs of the two normalization sites of each layer.
  std::vector<std::pair<ad::Var, ad::Var>> norm_inputs;

  SparseMatrix omega_matrix(std::size_t layer) const;
  SparseMatrix omega_head_matrix(std::size_t layer, std::size_t head) const;
};

// Leaves for every parameter are created on `tape` in parameters() order. Dropout
// draws from `rng` only when training.
ForwardRecord forward(const Model& m, const GraphContext& ctx, bool training, ad::Tape& tape,
                      std::mt19937_64& rng);

// Plain evaluation without gradients.
ForwardRecord evaluate_forward(const Model& m, const GraphContext& ctx, ad::Tape& tape);

// Pre-softmax attention scores for a single (receiver v, neighbor u) pair.
double gat_score(std::span<const double> h_v, std::span<const double> h_u, const GatHead& head,
                 double slope);
double gt_score(std::span<const double> h_v, std::span<const double> h_u, const DenseMatrix& query,
                const DenseMatrix& key);

// Row-wise argmax, ties to the lowest column.
std::vector<int> argmax_rows(const DenseMatrix& logits);

// Current edge mask values sigmoid(logits) of a GCN, one per undirected edge.
std::vector<double> edge_mask_values(const Model& m);

}  // namespace sgnn
