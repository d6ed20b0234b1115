#include "sgnn/models.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

#include "sgnn/errors.hpp"

namespace sgnn {

std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::Gcn: return "gcn";
    case Architecture::Gat: return "gat";
    case Architecture::Gt: return "gt";
  }
  return "?";
}

std::string_view to_string(Activation a) {
  return a == Activation::Relu ? "relu" : "leaky_relu";
}

std::string_view to_string(AttentionScope s) {
  return s == AttentionScope::Neighborhood ? "neighborhood" : "global";
}

Architecture parse_architecture(std::string_view s) {
  if (s == "gcn") return Architecture::Gcn;
  if (s == "gat") return Architecture::Gat;
  if (s == "gt") return Architecture::Gt;
  throw ValidationError("unknown model '" + std::string(s) + "' (expected gcn, gat or gt)");
}

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::Relu;
  if (s == "leaky_relu") return Activation::LeakyRelu;
  throw ValidationError("unknown activation '" + std::string(s) + "'");
}

AttentionScope parse_scope(std::string_view s) {
  if (s == "neighborhood") return AttentionScope::Neighborhood;
  if (s == "global") return AttentionScope::Global;
  throw ValidationError("unknown attention scope '" + std::string(s) + "'");
}

// ------------------------------------------------------------ parameters

namespace {

std::string head_name(std::string_view prefix, std::size_t i, std::string_view field) {
  return std::string(prefix) + ".h" + std::to_string(i) + "." + std::string(field);
}

void append_gat_layer(std::vector<ParamRef>& out, std::vector<GatHead>& heads,
                      std::string_view prefix) {
  for (std::size_t h = 0; h < heads.size(); ++h) {
    out.push_back({head_name(prefix, h, "weight"), &heads[h].weight, true});
    out.push_back({head_name(prefix, h, "att_dst"), &heads[h].att_dst, true});
    out.push_back({head_name(prefix, h, "att_src"), &heads[h].att_src, true});
  }
}

}  // namespace

std::vector<ParamRef> parameters(Model& m) {
  std::vector<ParamRef> out;
  if (auto* gcn = std::get_if<GcnModel>(&m.net)) {
    out.push_back({"gcn.w1", &gcn->w1, true});
    out.push_back({"gcn.w2", &gcn->w2, true});
    if (gcn->mask_logits) out.push_back({"gcn.mask_logits", &*gcn->mask_logits, false});
  } else if (auto* gat = std::get_if<GatModel>(&m.net)) {
    append_gat_layer(out, gat->layer1, "gat.l1");
    append_gat_layer(out, gat->layer2, "gat.l2");
  } else {
    auto& gt = std::get<GtModel>(m.net);
    out.push_back({"gt.embed", &gt.embed, true});
    for (std::size_t l = 0; l < gt.layers.size(); ++l) {
      auto& layer = gt.layers[l];
      const std::string p = "gt.l" + std::to_string(l);
      for (std::size_t h = 0; h < layer.query.size(); ++h) {
        out.push_back({head_name(p, h, "query"), &layer.query[h], true});
        out.push_back({head_name(p, h, "key"), &layer.key[h], true});
        out.push_back({head_name(p, h, "value"), &layer.value[h], true});
      }
      out.push_back({p + ".output", &layer.output, true});
      out.push_back({p + ".ffn_in", &layer.ffn_in, true});
      out.push_back({p + ".ffn_out", &layer.ffn_out, true});
      out.push_back({p + ".norm1_gain", &layer.norm1_gain, false});
      out.push_back({p + ".norm1_bias", &layer.norm1_bias, false});
      out.push_back({p + ".norm2_gain", &layer.norm2_gain, false});
      out.push_back({p + ".norm2_bias", &layer.norm2_bias, false});
    }
    out.push_back({"gt.classifier", &gt.classifier, true});
  }
  return out;
}

std::size_t parameter_count(const Model& m) {
  std::size_t total = 0;
  for (const auto& p : parameters(const_cast<Model&>(m))) total += p.value->size();
  return total;
}

namespace {

DenseMatrix glorot(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  DenseMatrix m(rows, cols);
  for (auto& v : m.values()) v = dist(rng);
  return m;
}

GatHead make_gat_head(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  GatHead h;
  h.weight = glorot(in, out, rng);
  h.att_dst = glorot(out, 1, rng);
  h.att_src = glorot(out, 1, rng);
  return h;
}

}  // namespace

Model init_model(const ModelConfig& cfg, std::size_t input_dim, std::size_t num_classes,
                 std::size_t num_edges, std::mt19937_64& rng) {
  if (input_dim == 0 || num_classes == 0) throw ValidationError("init_model: empty dimensions");
  if (cfg.hidden == 0) throw ValidationError("init_model: hidden width must be positive");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) {
    throw ValidationError("init_model: dropout must lie in [0, 1)");
  }
  Model m;
  m.config = cfg;
  m.input_dim = input_dim;
  m.num_classes = num_classes;

  switch (cfg.arch) {
    case Architecture::Gcn: {
      GcnModel g;
      g.w1 = glorot(input_dim, cfg.hidden, rng);
      g.w2 = glorot(cfg.hidden, num_classes, rng);
      if (cfg.edge_mask) g.mask_logits = DenseMatrix(num_edges, 1, cfg.mask_init);
      m.net = std::move(g);
      break;
    }
    case Architecture::Gat: {
      if (cfg.heads == 0 || cfg.output_heads == 0 || cfg.hidden % cfg.heads != 0) {
        throw ValidationError("init_model: GAT hidden width must be a multiple of the head count");
      }
      const std::size_t head_dim = cfg.hidden / cfg.heads;
      GatModel g;
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        g.layer1.push_back(make_gat_head(input_dim, head_dim, rng));
      }
      for (std::size_t h = 0; h < cfg.output_heads; ++h) {
        g.layer2.push_back(make_gat_head(cfg.hidden, num_classes, rng));
      }
      m.net = std::move(g);
      break;
    }
    case Architecture::Gt: {
      if (cfg.heads == 0 || cfg.hidden % cfg.heads != 0 || cfg.gt_layers == 0) {
        throw ValidationError("init_model: GT width must be a multiple of the head count");
      }
      const std::size_t d = cfg.hidden;
      const std::size_t dh = d / cfg.heads;
      GtModel g;
      g.embed = glorot(input_dim, d, rng);
      for (std::size_t l = 0; l < cfg.gt_layers; ++l) {
        GtLayer layer;
        for (std::size_t h = 0; h < cfg.heads; ++h) {
          layer.query.push_back(glorot(d, dh, rng));
          layer.key.push_back(glorot(d, dh, rng));
          layer.value.push_back(glorot(d, dh, rng));
        }
        layer.output = glorot(d, d, rng);
        layer.ffn_in = glorot(d, 2 * d, rng);
        layer.ffn_out = glorot(2 * d, d, rng);
        layer.norm1_gain = DenseMatrix(1, d, 1.0);
        layer.norm1_bias = DenseMatrix(1, d, 0.0);
        layer.norm2_gain = DenseMatrix(1, d, 1.0);
        layer.norm2_bias = DenseMatrix(1, d, 0.0);
        g.layers.push_back(std::move(layer));
      }
      g.classifier = glorot(d, num_classes, rng);
      m.net = std::move(g);
      break;
    }
  }
  return m;
}

// --------------------------------------------------------------- context

GraphContext make_context(const Graph& g, bool with_complete_pattern) {
  GraphContext ctx;
  ctx.ops = normalize(g);
  ctx.features = std::make_shared<const SparseMatrix>(feature_matrix(g));
  ctx.pattern = ctx.ops.a_hat;
  ctx.num_edges = g.edges.size();

  const auto& a = *ctx.ops.a_hat;
  const std::size_t n = a.rows();
  const std::size_t nnz = a.nnz();
  auto rows = std::make_shared<std::vector<std::int64_t>>(nnz);
  auto cols = std::make_shared<std::vector<std::int64_t>>(nnz);
  ctx.diagonal_entries = DenseMatrix(nnz, 1);
  ctx.a_hat_values = DenseMatrix(nnz, 1);
  ctx.a_hat_row_mass = DenseMatrix(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t e = a.offsets()[r]; e < a.offsets()[r + 1]; ++e) {
      const std::size_t c = a.indices()[e];
      (*rows)[e] = static_cast<std::int64_t>(r);
      (*cols)[e] = static_cast<std::int64_t>(c);
      ctx.diagonal_entries(e, 0) = (r == c) ? 1.0 : 0.0;
      ctx.a_hat_values(e, 0) = a.values()[e];
      ctx.a_hat_row_mass(r, 0) += a.values()[e];
    }
  }
  ctx.entry_row = rows;
  ctx.entry_col = cols;

  if (with_complete_pattern) {
    std::vector<std::size_t> offsets(n + 1);
    std::vector<std::uint32_t> idx(n * n);
    auto crow = std::make_shared<std::vector<std::int64_t>>(n * n);
    auto ccol = std::make_shared<std::vector<std::int64_t>>(n * n);
    for (std::size_t r = 0; r < n; ++r) {
      offsets[r + 1] = (r + 1) * n;
      for (std::size_t c = 0; c < n; ++c) {
        idx[r * n + c] = static_cast<std::uint32_t>(c);
        (*crow)[r * n + c] = static_cast<std::int64_t>(r);
        (*ccol)[r * n + c] = static_cast<std::int64_t>(c);
      }
    }
    ctx.complete = std::make_shared<const SparseMatrix>(
        n, n, std::move(offsets), std::move(idx), std::vector<double>(n * n, 1.0));
    ctx.complete_row = crow;
    ctx.complete_col = ccol;
  }
  return ctx;
}

SparseMatrix ForwardRecord::omega_matrix(std::size_t layer) const {
  if (layer >= omega.size()) throw ValidationError("omega_matrix: layer out of range");
  return patterns[layer]->with_values(omega[layer].value().values());
}

SparseMatrix ForwardRecord::omega_head_matrix(std::size_t layer, std::size_t head) const {
  if (layer >= omega_heads.size() || head >= omega_heads[layer].size()) {
    throw ValidationError("omega_head_matrix: index out of range");
  }
  return patterns[layer]->with_values(omega_heads[layer][head].value().values());
}

// --------------------------------------------------------------- forward

namespace {

using ad::Var;

class Leaves {
 public:
  Leaves(const Model& m, ad::Tape& tape) {
    for (const auto& p : parameters(const_cast<Model&>(m))) {
      Var v = tape.leaf(*p.value);
      ordered_.push_back(v);
      by_name_.emplace(p.name, v);
    }
  }
  Var operator[](const std::string& name) const { return by_name_.at(name); }
  const std::vector<Var>& ordered() const { return ordered_; }

 private:
  std::vector<Var> ordered_;
  std::unordered_map<std::string, Var> by_name_;
};

Var activate(Var x, const ModelConfig& cfg) {
  return cfg.activation == Activation::Relu ? ad::relu(x) : ad::leaky_relu(x, cfg.activation_slope);
}

// Inverted dropout on the stored entries of a constant sparse matrix.
SparsePtr sparse_dropout(const SparsePtr& s, double rate, std::mt19937_64& rng, bool training) {
  if (!training || rate == 0.0) return s;
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  std::vector<double> vals = s->values();
  for (auto& v : vals) v = keep(rng) ? v * scale : 0.0;
  return std::make_shared<const SparseMatrix>(s->with_values(std::move(vals)));
}

// Input-layer product X W with X either a sparse constant or a dense Var.
struct LayerInput {
  SparsePtr sparse;
  Var dense;
  Var times(Var w) const { return sparse ? ad::spmm(sparse, w) : ad::matmul(dense, w); }
};

void forward_gcn(const Model& m, const GcnModel&, const GraphContext& ctx, bool training,
                 ad::Tape& tape, std::mt19937_64& rng, const Leaves& p, ForwardRecord& rec) {
  const auto& cfg = m.config;
  Var omega;
  if (cfg.edge_mask) {
    Var logits = p["gcn.mask_logits"];
    Var mask = ad::sigmoid(logits);
    Var per_entry = ad::add(ad::gather_rows(mask, ctx.ops.edge_id),
                            tape.constant(ctx.diagonal_entries));
    Var raw = ad::mul(per_entry, tape.constant(ctx.a_hat_values));
    if (cfg.mask_renormalize) {
      Var mass = ad::segment_sum(raw, ctx.entry_row, ctx.ops.n());
      Var ratio = ad::div(tape.constant(ctx.a_hat_row_mass), mass);
      omega = ad::mul(raw, ad::gather_rows(ratio, ctx.entry_row));
    } else {
      omega = raw;
    }
  } else {
    omega = tape.constant(ctx.a_hat_values);
  }
  const Var propagation = cfg.edge_mask && !cfg.mask_task_gradient ? ad::detach(omega) : omega;
  auto aggregate = [&](Var h) {
    return cfg.edge_mask ? ad::spmm_values(ctx.pattern, propagation, h) : ad::spmm(ctx.pattern, h);
  };

  SparsePtr x = sparse_dropout(ctx.features, cfg.dropout, rng, training);
  Var h1 = activate(aggregate(ad::spmm(x, p["gcn.w1"])), cfg);
  Var h1d = ad::dropout(h1, cfg.dropout, rng, training);
  rec.logits = aggregate(ad::matmul(h1d, p["gcn.w2"]));
  rec.hidden = {h1};
  rec.omega = {omega, omega};
  rec.omega_heads = {{omega}, {omega}};
  rec.patterns = {ctx.pattern, ctx.pattern};
}

struct GatLayerOut {
  std::vector<Var> outputs;  // per head, n x f
  std::vector<Var> alphas;   // per head, nnz x 1
};

GatLayerOut gat_layer(const LayerInput& in, const Leaves& p, std::string_view prefix,
                      std::size_t heads, double slope, const GraphContext& ctx) {
  GatLayerOut out;
  for (std::size_t h = 0; h < heads; ++h) {
    Var z = in.times(p[head_name(prefix, h, "weight")]);
    Var s_dst = ad::matmul(z, p[head_name(prefix, h, "att_dst")]);
    Var s_src = ad::matmul(z, p[head_name(prefix, h, "att_src")]);
    Var scores = ad::leaky_relu(
        ad::add(ad::gather_rows(s_dst, ctx.entry_row), ad::gather_rows(s_src, ctx.entry_col)),
        slope);
    Var alpha = ad::edge_softmax(ctx.pattern, scores);
    out.outputs.push_back(ad::spmm_values(ctx.pattern, alpha, z));
    out.alphas.push_back(alpha);
  }
  return out;
}

Var head_mean(const std::vector<Var>& vs) {
  Var acc = vs.front();
  for (std::size_t i = 1; i < vs.size(); ++i) acc = ad::add(acc, vs[i]);
  return vs.size() == 1 ? acc : ad::scale(acc, 1.0 / static_cast<double>(vs.size()));
}

void forward_gat(const Model& m, const GatModel& g, const GraphContext& ctx, bool training,
                 std::mt19937_64& rng, const Leaves& p, ForwardRecord& rec) {
  const auto& cfg = m.config;
  LayerInput in1{sparse_dropout(ctx.features, cfg.dropout, rng, training), {}};
  auto l1 = gat_layer(in1, p, "gat.l1", g.layer1.size(), cfg.attention_slope, ctx);
  Var h1 = activate(ad::concat_cols(l1.outputs), cfg);
  LayerInput in2{nullptr, ad::dropout(h1, cfg.dropout, rng, training)};
  auto l2 = gat_layer(in2, p, "gat.l2", g.layer2.size(), cfg.attention_slope, ctx);
  rec.logits = head_mean(l2.outputs);
  rec.hidden = {h1};
  rec.omega = {head_mean(l1.alphas), head_mean(l2.alphas)};
  rec.omega_heads = {l1.alphas, l2.alphas};
  rec.patterns = {ctx.pattern, ctx.pattern};
}

void forward_gt(const Model& m, const GtModel& g, const GraphContext& ctx, bool training,
                std::mt19937_64& rng, const Leaves& p, ForwardRecord& rec) {
  const auto& cfg = m.config;
  const bool global = cfg.scope == AttentionScope::Global;
  if (global && !ctx.complete) {
    throw StateError("global attention needs a context built with the complete pattern");
  }
  const std::size_t n = ctx.ops.n();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.hidden / cfg.heads));

  SparsePtr x = sparse_dropout(ctx.features, cfg.dropout, rng, training);
  Var h = ad::spmm(x, p["gt.embed"]);
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    const std::string pre = "gt.l" + std::to_string(l);
    std::vector<Var> outs, alphas;
    for (std::size_t hd = 0; hd < g.layers[l].query.size(); ++hd) {
      Var q = ad::matmul(h, p[head_name(pre, hd, "query")]);
      Var k = ad::matmul(h, p[head_name(pre, hd, "key")]);
      Var v = ad::matmul(h, p[head_name(pre, hd, "value")]);
      if (global) {
        Var alpha = ad::row_softmax(ad::scale(ad::matmul_nt(q, k), inv_sqrt));
        outs.push_back(ad::matmul(alpha, v));
        alphas.push_back(ad::reshape(alpha, n * n, 1));
      } else {
        Var alpha = ad::edge_softmax(ctx.pattern, ad::scale(ad::edge_dot(ctx.pattern, q, k), inv_sqrt));
        outs.push_back(ad::spmm_values(ctx.pattern, alpha, v));
        alphas.push_back(alpha);
      }
    }
    Var attended = ad::matmul(ad::concat_cols(outs), p[pre + ".output"]);
    attended = ad::dropout(attended, cfg.dropout, rng, training);
    Var res1 = ad::add(h, attended);
    Var mid = ad::layer_norm(res1, p[pre + ".norm1_gain"], p[pre + ".norm1_bias"]);
    Var ffn = ad::matmul(activate(ad::matmul(mid, p[pre + ".ffn_in"]), cfg), p[pre + ".ffn_out"]);
    ffn = ad::dropout(ffn, cfg.dropout, rng, training);
    Var res2 = ad::add(mid, ffn);
    h = ad::layer_norm(res2, p[pre + ".norm2_gain"], p[pre + ".norm2_bias"]);
    rec.norm_inputs.emplace_back(res1, res2);

    rec.hidden.push_back(h);
    rec.omega.push_back(head_mean(alphas));
    rec.omega_heads.push_back(std::move(alphas));
    rec.patterns.push_back(global ? ctx.complete : ctx.pattern);
  }
  rec.logits = ad::matmul(ad::dropout(h, cfg.dropout, rng, training), p["gt.classifier"]);
}

}  // namespace

ForwardRecord forward(const Model& m, const GraphContext& ctx, bool training, ad::Tape& tape,
                      std::mt19937_64& rng) {
  if (ctx.features->cols() != m.input_dim) {
    throw ShapeError("forward: feature width " + std::to_string(ctx.features->cols()) +
                     " does not match model input " + std::to_string(m.input_dim));
  }
  Leaves leaves(m, tape);
  ForwardRecord rec;
  rec.params = leaves.ordered();
  if (const auto* gcn = std::get_if<GcnModel>(&m.net)) {
    if (gcn->mask_logits && gcn->mask_logits->rows() != ctx.num_edges) {
      throw ShapeError("forward: edge mask size does not match the graph");
    }
    forward_gcn(m, *gcn, ctx, training, tape, rng, leaves, rec);
  } else if (const auto* gat = std::get_if<GatModel>(&m.net)) {
    forward_gat(m, *gat, ctx, training, rng, leaves, rec);
  } else {
    forward_gt(m, std::get<GtModel>(m.net), ctx, training, rng, leaves, rec);
  }
  return rec;
}

ForwardRecord evaluate_forward(const Model& m, const GraphContext& ctx, ad::Tape& tape) {
  std::mt19937_64 unused(0);
  return forward(m, ctx, false, tape, unused);
}

double gat_score(std::span<const double> h_v, std::span<const double> h_u, const GatHead& head,
                 double slope) {
  const auto& w = head.weight;
  if (h_v.size() != w.rows() || h_u.size() != w.rows()) throw ShapeError("gat_score: width mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < w.cols(); ++j) {
    double zv = 0.0, zu = 0.0;
    for (std::size_t i = 0; i < w.rows(); ++i) {
      zv += h_v[i] * w(i, j);
      zu += h_u[i] * w(i, j);
    }
    s += head.att_dst(j, 0) * zv + head.att_src(j, 0) * zu;
  }
  return s >= 0.0 ? s : slope * s;
}

double gt_score(std::span<const double> h_v, std::span<const double> h_u, const DenseMatrix& query,
                const DenseMatrix& key) {
  if (h_v.size() != query.rows() || h_u.size() != key.rows() || query.cols() != key.cols()) {
    throw ShapeError("gt_score: width mismatch");
  }
  double s = 0.0;
  for (std::size_t j = 0; j < query.cols(); ++j) {
    double q = 0.0, k = 0.0;
    for (std::size_t i = 0; i < query.rows(); ++i) {
      q += h_v[i] * query(i, j);
      k += h_u[i] * key(i, j);
    }
    s += q * k;
  }
  return s / std::sqrt(static_cast<double>(query.cols()));
}

std::vector<int> argmax_rows(const DenseMatrix& logits) {
  std::vector<int> out(logits.rows(), 0);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

std::vector<double> edge_mask_values(const Model& m) {
  const auto* gcn = std::get_if<GcnModel>(&m.net);
  if (gcn == nullptr || !gcn->mask_logits) return {};
  std::vector<double> out;
  out.reserve(gcn->mask_logits->rows());
  for (double z : gcn->mask_logits->values()) out.push_back(1.0 / (1.0 + std::exp(-z)));
  return out;
}

}  // namespace sgnn
