#include "sgnn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sgnn/errors.hpp"
#include "sgnn/kernels.hpp"

namespace sgnn::ad {

// ---------------------------------------------------------------- Var / Tape

const DenseMatrix& Var::value() const { return tape_->nodes_[id_].value; }
const DenseMatrix& Var::grad() const { return tape_->nodes_[id_].grad; }
bool Var::requires_grad() const { return tape_->nodes_[id_].requires_grad; }

double Var::item() const {
  const auto& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ShapeError("item: node is not 1x1");
  return v(0, 0);
}

Var Tape::leaf(DenseMatrix value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(DenseMatrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(DenseMatrix value, std::span<const Var> parents, BackwardFn fn) {
  bool any = false;
  for (const auto& p : parents) {
    if (p.tape() != this) throw StateError("record: parent belongs to another tape");
    any = any || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, any, any ? std::move(fn) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  if (nodes_.empty()) throw StateError("backward: nothing has been recorded");
  if (loss.tape() != this || loss.id() >= nodes_.size()) {
    throw StateError("backward: loss does not belong to this tape");
  }
  const auto& lv = nodes_[loss.id()].value;
  if (lv.rows() != 1 || lv.cols() != 1) throw StateError("backward: loss must be 1x1");

  for (auto& n : nodes_) {
    if (n.requires_grad) {
      n.grad = DenseMatrix(n.value.rows(), n.value.cols());
    } else {
      n.grad = DenseMatrix();
    }
  }
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad(0, 0) = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, n.grad);
  }
}

namespace {

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw StateError("operation on an unbound Var");
  return *a.tape();
}

void check_same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw StateError("operands belong to different tapes");
}

std::string shape(const DenseMatrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void accumulate(Tape& t, const Var& v, const DenseMatrix& g) {
  if (t.needs_grad(v)) t.grad_of(v) += g;
}

enum class Bcast { Full, Scalar, Row, Col };

Bcast broadcast_kind(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
  if (a.same_shape(b)) return Bcast::Full;
  if (b.rows() == 1 && b.cols() == 1) return Bcast::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::Row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::Col;
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape(b) + " onto " + shape(a));
}

inline double bval(const DenseMatrix& b, Bcast k, std::size_t r, std::size_t c) {
  switch (k) {
    case Bcast::Full:
      return b(r, c);
    case Bcast::Scalar:
      return b(0, 0);
    case Bcast::Row:
      return b(0, c);
    case Bcast::Col:
      return b(r, 0);
  }
  return 0.0;
}

inline double& bref(DenseMatrix& b, Bcast k, std::size_t r, std::size_t c) {
  switch (k) {
    case Bcast::Full:
      return b(r, c);
    case Bcast::Scalar:
      return b(0, 0);
    case Bcast::Row:
      return b(0, c);
    case Bcast::Col:
      return b(r, 0);
  }
  return b(0, 0);
}

// Elementwise binary op; df_da/df_db give local partials at (x, y).
template <class F, class Da, class Db>
Var binary(Var a, Var b, const char* name, F f, Da da, Db db) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  const auto& av = a.value();
  const auto& bv = b.value();
  const Bcast kind = broadcast_kind(av, bv, name);
  DenseMatrix out(av.rows(), av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out(r, c) = f(av(r, c), bval(bv, kind, r, c));
  const Var parents[] = {a, b};
  return t.record(std::move(out), parents, [a, b, kind, da, db](Tape& t, const DenseMatrix& g) {
    const auto& av = a.value();
    const auto& bv = b.value();
    if (t.needs_grad(a)) {
      auto& ga = t.grad_of(a);
      for (std::size_t r = 0; r < av.rows(); ++r)
        for (std::size_t c = 0; c < av.cols(); ++c)
          ga(r, c) += g(r, c) * da(av(r, c), bval(bv, kind, r, c));
    }
    if (t.needs_grad(b)) {
      auto& gb = t.grad_of(b);
      for (std::size_t r = 0; r < av.rows(); ++r)
        for (std::size_t c = 0; c < av.cols(); ++c)
          bref(gb, kind, r, c) += g(r, c) * db(av(r, c), bval(bv, kind, r, c));
    }
  });
}

}  // namespace

// ------------------------------------------------------------------- algebra

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  DenseMatrix out = sgnn::matmul(a.value(), b.value());
  const Var parents[] = {a, b};
  return t.record(std::move(out), parents, [a, b](Tape& t, const DenseMatrix& g) {
    if (t.needs_grad(a)) accumulate(t, a, sgnn::matmul_nt(g, b.value()));
    if (t.needs_grad(b)) accumulate(t, b, sgnn::matmul_tn(a.value(), g));
  });
}

Var matmul_nt(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = tape_of(a);
  DenseMatrix out = sgnn::matmul_nt(a.value(), b.value());
  const Var parents[] = {a, b};
  return t.record(std::move(out), parents, [a, b](Tape& t, const DenseMatrix& g) {
    // out = a b^T: da = g b, db = g^T a
    if (t.needs_grad(a)) accumulate(t, a, sgnn::matmul(g, b.value()));
    if (t.needs_grad(b)) accumulate(t, b, sgnn::matmul_tn(g, a.value()));
  });
}

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

namespace {

// Elementwise map; d gives the derivative at the input.
template <class F, class D>
Var map_unary(Var a, F f, D d) {
  Tape& t = tape_of(a);
  const auto& av = a.value();
  DenseMatrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out.data()[i] = f(av.data()[i]);
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a, d](Tape& t, const DenseMatrix& g) {
    const auto& av = a.value();
    auto& ga = t.grad_of(a);
    for (std::size_t i = 0; i < av.size(); ++i) ga.data()[i] += g.data()[i] * d(av.data()[i]);
  });
}

}  // namespace

Var scale(Var a, double s) {
  return map_unary(a, [s](double x) { return s * x; }, [s](double) { return s; });
}

Var add_scalar(Var a, double s) {
  return map_unary(a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

Var one_minus(Var a) {
  return map_unary(a, [](double x) { return 1.0 - x; }, [](double) { return -1.0; });
}

Var relu(Var a) {
  return map_unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Var a, double slope) {
  return map_unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x) { return x > 0.0 ? 1.0 : slope; });
}

Var sigmoid(Var a) {
  auto sig = [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  };
  return map_unary(a, sig, [sig](double x) {
    const double s = sig(x);
    return s * (1.0 - s);
  });
}

Var log(Var a) {
  static constexpr double kFloor = 1e-300;
  return map_unary(
      a, [](double x) { return std::log(std::max(x, kFloor)); },
      [](double x) { return x > kFloor ? 1.0 / x : 0.0; });
}

// -------------------------------------------------------------- normalization

namespace {

DenseMatrix softmax_rows(const DenseMatrix& a, const DenseMatrix* mask) {
  DenseMatrix out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < a.cols(); ++c)
      if (mask == nullptr || (*mask)(r, c) != 0.0) mx = std::max(mx, a(r, c));
    if (mx == -INFINITY) {
      throw ValidationError("softmax: row " + std::to_string(r) + " has no active entry");
    }
    double z = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      if (mask != nullptr && (*mask)(r, c) == 0.0) continue;
      out(r, c) = std::exp(a(r, c) - mx);
      z += out(r, c);
    }
    for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) /= z;
  }
  return out;
}

Var softmax_node(Var a, const DenseMatrix* mask) {
  Tape& t = tape_of(a);
  DenseMatrix out = softmax_rows(a.value(), mask);
  const Var parents[] = {a};
  auto probs = std::make_shared<DenseMatrix>(out);
  return t.record(std::move(out), parents, [a, probs](Tape& t, const DenseMatrix& g) {
    if (!t.needs_grad(a)) return;
    const auto& p = *probs;
    auto& ga = t.grad_of(a);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < p.cols(); ++c) s += p(r, c) * g(r, c);
      for (std::size_t c = 0; c < p.cols(); ++c) ga(r, c) += p(r, c) * (g(r, c) - s);
    }
  });
}

}  // namespace

Var row_softmax(Var a) { return softmax_node(a, nullptr); }

Var masked_row_softmax(Var a, const DenseMatrix& mask) {
  if (!mask.same_shape(a.value())) throw ShapeError("masked_row_softmax: mask shape mismatch");
  return softmax_node(a, &mask);
}

Var layer_norm(Var a, Var gain, Var bias, double eps) {
  check_same_tape(a, gain);
  check_same_tape(a, bias);
  Tape& t = tape_of(a);
  const auto& x = a.value();
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d) {
    throw ShapeError("layer_norm: gain/bias must be 1x" + std::to_string(d));
  }
  auto xhat = std::make_shared<DenseMatrix>(n, d);
  auto inv_std = std::make_shared<std::vector<double>>(n);
  DenseMatrix out(n, d);
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::size_t r = 0; r < n; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < d; ++c) mu += x(r, c);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (x(r, c) - mu) * (x(r, c) - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      (*xhat)(r, c) = (x(r, c) - mu) * is;
      out(r, c) = gv(0, c) * (*xhat)(r, c) + bv(0, c);
    }
  }
  const Var parents[] = {a, gain, bias};
  return t.record(std::move(out), parents,
                  [a, gain, bias, xhat, inv_std](Tape& t, const DenseMatrix& g) {
                    const auto& xh = *xhat;
                    const std::size_t n = xh.rows();
                    const std::size_t d = xh.cols();
                    const auto& gv = gain.value();
                    if (t.needs_grad(gain) || t.needs_grad(bias)) {
                      DenseMatrix gg(1, d), gb(1, d);
                      for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t c = 0; c < d; ++c) {
                          gg(0, c) += g(r, c) * xh(r, c);
                          gb(0, c) += g(r, c);
                        }
                      accumulate(t, gain, gg);
                      accumulate(t, bias, gb);
                    }
                    if (!t.needs_grad(a)) return;
                    auto& ga = t.grad_of(a);
                    const double inv_d = 1.0 / static_cast<double>(d);
                    for (std::size_t r = 0; r < n; ++r) {
                      double m1 = 0.0, m2 = 0.0;
                      for (std::size_t c = 0; c < d; ++c) {
                        const double dxh = g(r, c) * gv(0, c);
                        m1 += dxh;
                        m2 += dxh * xh(r, c);
                      }
                      m1 *= inv_d;
                      m2 *= inv_d;
                      for (std::size_t c = 0; c < d; ++c) {
                        const double dxh = g(r, c) * gv(0, c);
                        ga(r, c) += (*inv_std)[r] * (dxh - m1 - xh(r, c) * m2);
                      }
                    }
                  });
}

// --------------------------------------------------------------------- shape

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& t = tape_of(parts[0]);
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    check_same_tape(parts[0], p);
    if (p.rows() != n) throw ShapeError("concat_cols: row counts differ");
    total += p.cols();
  }
  DenseMatrix out(n, total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    for (std::size_t r = 0; r < n; ++r)
      std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(off));
    off += v.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [ps](Tape& t, const DenseMatrix& g) {
    std::size_t off = 0;
    for (const auto& p : ps) {
      const std::size_t w = p.cols();
      if (t.needs_grad(p)) {
        auto& gp = t.grad_of(p);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) gp(r, c) += g(r, off + c);
      }
      off += w;
    }
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Tape& t = tape_of(a);
  const auto& v = a.value();
  if (start + count > v.cols()) throw ShapeError("slice_cols: range exceeds column count");
  DenseMatrix out(v.rows(), count);
  for (std::size_t r = 0; r < v.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = v(r, start + c);
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a, start, count](Tape& t, const DenseMatrix& g) {
    auto& ga = t.grad_of(a);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < count; ++c) ga(r, start + c) += g(r, c);
  });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  Tape& t = tape_of(a);
  if (rows * cols != a.value().size()) throw ShapeError("reshape: element count changes");
  DenseMatrix out(rows, cols, a.value().values());
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a](Tape& t, const DenseMatrix& g) {
    auto& ga = t.grad_of(a);
    kernels::active().axpy(1.0, g.data(), ga.data(), g.size());
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const Var parents[] = {a};
  return t.record(DenseMatrix(1, 1, s), parents, [a](Tape& t, const DenseMatrix& g) {
    const double s = g(0, 0);
    for (double& v : t.grad_of(a).values()) v += s;
  });
}

Var col_sum(Var a) {
  Tape& t = tape_of(a);
  const auto& v = a.value();
  DenseMatrix out(1, v.cols());
  for (std::size_t r = 0; r < v.rows(); ++r)
    for (std::size_t c = 0; c < v.cols(); ++c) out(0, c) += v(r, c);
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a](Tape& t, const DenseMatrix& g) {
    auto& ga = t.grad_of(a);
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g(0, c);
  });
}

Var detach(Var a) { return tape_of(a).constant(a.value()); }

// ----------------------------------------------------------------- sparse ops

Var spmm(const SparsePtr& s, Var x) {
  Tape& t = tape_of(x);
  DenseMatrix out = sgnn::spmm(*s, x.value());
  const Var parents[] = {x};
  return t.record(std::move(out), parents, [s, x](Tape& t, const DenseMatrix& g) {
    accumulate(t, x, sgnn::spmm_transposed(*s, g));
  });
}

Var spmm_values(const SparsePtr& pattern, Var values, Var x) {
  check_same_tape(values, x);
  Tape& t = tape_of(x);
  const auto& vv = values.value();
  if (vv.rows() != pattern->nnz() || vv.cols() != 1) {
    throw ShapeError("spmm_values: values must be nnz x 1");
  }
  auto weighted = std::make_shared<SparseMatrix>(pattern->with_values(vv.values()));
  DenseMatrix out = sgnn::spmm(*weighted, x.value());
  const Var parents[] = {values, x};
  return t.record(std::move(out), parents,
                  [pattern, weighted, values, x](Tape& t, const DenseMatrix& g) {
                    if (t.needs_grad(x)) accumulate(t, x, sgnn::spmm_transposed(*weighted, g));
                    if (t.needs_grad(values)) {
                      auto& gv = t.grad_of(values);
                      const auto& xv = x.value();
                      const auto& off = pattern->offsets();
                      const auto& idx = pattern->indices();
                      const auto& k = kernels::active();
                      for (std::size_t r = 0; r < pattern->rows(); ++r)
                        for (std::size_t e = off[r]; e < off[r + 1]; ++e)
                          gv(e, 0) += k.dot(g.row(r).data(), xv.row(idx[e]).data(), g.cols());
                    }
                  });
}

Var edge_dot(const SparsePtr& pattern, Var q, Var k) {
  check_same_tape(q, k);
  Tape& t = tape_of(q);
  const auto& qv = q.value();
  const auto& kv = k.value();
  if (qv.cols() != kv.cols() || qv.rows() != pattern->rows() || kv.rows() != pattern->cols()) {
    throw ShapeError("edge_dot: operand shapes do not match the pattern");
  }
  const auto& off = pattern->offsets();
  const auto& idx = pattern->indices();
  const auto& ker = kernels::active();
  DenseMatrix out(pattern->nnz(), 1);
  for (std::size_t r = 0; r < pattern->rows(); ++r)
    for (std::size_t e = off[r]; e < off[r + 1]; ++e)
      out(e, 0) = ker.dot(qv.row(r).data(), kv.row(idx[e]).data(), qv.cols());
  const Var parents[] = {q, k};
  return t.record(std::move(out), parents, [pattern, q, k](Tape& t, const DenseMatrix& g) {
    const auto& off = pattern->offsets();
    const auto& idx = pattern->indices();
    const auto& ker = kernels::active();
    const std::size_t d = q.cols();
    const bool gq = t.needs_grad(q);
    const bool gk = t.needs_grad(k);
    for (std::size_t r = 0; r < pattern->rows(); ++r)
      for (std::size_t e = off[r]; e < off[r + 1]; ++e) {
        const double ge = g(e, 0);
        if (ge == 0.0) continue;
        if (gq) ker.axpy(ge, k.value().row(idx[e]).data(), t.grad_of(q).row(r).data(), d);
        if (gk) ker.axpy(ge, q.value().row(r).data(), t.grad_of(k).row(idx[e]).data(), d);
      }
  });
}

Var edge_softmax(const SparsePtr& pattern, Var scores) {
  Tape& t = tape_of(scores);
  const auto& sv = scores.value();
  if (sv.rows() != pattern->nnz() || sv.cols() != 1) {
    throw ShapeError("edge_softmax: scores must be nnz x 1");
  }
  const auto& off = pattern->offsets();
  DenseMatrix out(sv.rows(), 1);
  for (std::size_t r = 0; r < pattern->rows(); ++r) {
    if (off[r] == off[r + 1]) {
      throw ValidationError("edge_softmax: row " + std::to_string(r) + " has no candidates");
    }
    double mx = -INFINITY;
    for (std::size_t e = off[r]; e < off[r + 1]; ++e) mx = std::max(mx, sv(e, 0));
    double z = 0.0;
    for (std::size_t e = off[r]; e < off[r + 1]; ++e) {
      out(e, 0) = std::exp(sv(e, 0) - mx);
      z += out(e, 0);
    }
    for (std::size_t e = off[r]; e < off[r + 1]; ++e) out(e, 0) /= z;
  }
  auto probs = std::make_shared<DenseMatrix>(out);
  const Var parents[] = {scores};
  return t.record(std::move(out), parents, [pattern, probs, scores](Tape& t, const DenseMatrix& g) {
    const auto& off = pattern->offsets();
    const auto& p = *probs;
    auto& gs = t.grad_of(scores);
    for (std::size_t r = 0; r < pattern->rows(); ++r) {
      double s = 0.0;
      for (std::size_t e = off[r]; e < off[r + 1]; ++e) s += p(e, 0) * g(e, 0);
      for (std::size_t e = off[r]; e < off[r + 1]; ++e) gs(e, 0) += p(e, 0) * (g(e, 0) - s);
    }
  });
}

Var gather_rows(Var a, const IndexPtr& idx) {
  Tape& t = tape_of(a);
  const auto& av = a.value();
  DenseMatrix out(idx->size(), av.cols());
  for (std::size_t i = 0; i < idx->size(); ++i) {
    const auto src = (*idx)[i];
    if (src < 0) continue;
    if (static_cast<std::size_t>(src) >= av.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy(av.row(static_cast<std::size_t>(src)).begin(), av.row(static_cast<std::size_t>(src)).end(),
              out.row(i).begin());
  }
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a, idx](Tape& t, const DenseMatrix& g) {
    auto& ga = t.grad_of(a);
    const auto& ker = kernels::active();
    for (std::size_t i = 0; i < idx->size(); ++i) {
      const auto src = (*idx)[i];
      if (src >= 0) ker.axpy(1.0, g.row(i).data(), ga.row(static_cast<std::size_t>(src)).data(), g.cols());
    }
  });
}

Var segment_sum(Var a, const IndexPtr& segment, std::size_t segments) {
  Tape& t = tape_of(a);
  const auto& av = a.value();
  if (segment->size() != av.rows()) throw ShapeError("segment_sum: one segment id per row");
  DenseMatrix out(segments, av.cols());
  const auto& ker = kernels::active();
  for (std::size_t i = 0; i < av.rows(); ++i) {
    const auto s = (*segment)[i];
    if (s < 0) continue;
    if (static_cast<std::size_t>(s) >= segments) throw ShapeError("segment_sum: segment id out of range");
    ker.axpy(1.0, av.row(i).data(), out.row(static_cast<std::size_t>(s)).data(), av.cols());
  }
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a, segment](Tape& t, const DenseMatrix& g) {
    auto& ga = t.grad_of(a);
    const auto& ker = kernels::active();
    for (std::size_t i = 0; i < ga.rows(); ++i) {
      const auto s = (*segment)[i];
      if (s >= 0) ker.axpy(1.0, g.row(static_cast<std::size_t>(s)).data(), ga.row(i).data(), ga.cols());
    }
  });
}

// ------------------------------------------------------------------- losses

Var dropout(Var a, double rate, std::mt19937_64& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw ValidationError("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return a;
  Tape& t = tape_of(a);
  const auto& av = a.value();
  const double keep = 1.0 - rate;
  auto mask = std::make_shared<std::vector<double>>(av.size());
  std::bernoulli_distribution coin(keep);
  DenseMatrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) {
    (*mask)[i] = coin(rng) ? 1.0 / keep : 0.0;
    out.data()[i] = av.data()[i] * (*mask)[i];
  }
  const Var parents[] = {a};
  return t.record(std::move(out), parents, [a, mask](Tape& t, const DenseMatrix& g) {
    auto& ga = t.grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * (*mask)[i];
  });
}

Var cross_entropy_with_logits(Var logits, std::span<const int> labels,
                              std::span<const std::uint8_t> mask) {
  Tape& t = tape_of(logits);
  const auto& z = logits.value();
  if (labels.size() != z.rows() || mask.size() != z.rows()) {
    throw ShapeError("cross_entropy_with_logits: labels/mask length must equal row count");
  }
  std::size_t m = 0;
  for (auto b : mask) m += b != 0;
  if (m == 0) throw ValidationError("cross_entropy_with_logits: empty mask");
  auto probs = std::make_shared<DenseMatrix>(z.rows(), z.cols());
  double loss = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    if (!mask[r]) continue;
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= z.cols()) {
      throw ValidationError("cross_entropy_with_logits: label out of range");
    }
    double mx = -INFINITY;
    for (std::size_t c = 0; c < z.cols(); ++c) mx = std::max(mx, z(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) s += std::exp(z(r, c) - mx);
    const double lse = mx + std::log(s);
    loss += lse - z(r, static_cast<std::size_t>(y));
    for (std::size_t c = 0; c < z.cols(); ++c) (*probs)(r, c) = std::exp(z(r, c) - lse);
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  std::vector<int> lab(labels.begin(), labels.end());
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  const Var parents[] = {logits};
  return t.record(DenseMatrix(1, 1, loss * inv_m), parents,
                  [logits, probs, lab = std::move(lab), msk = std::move(msk), inv_m](
                      Tape& t, const DenseMatrix& g) {
                    auto& gz = t.grad_of(logits);
                    const double s = g(0, 0) * inv_m;
                    for (std::size_t r = 0; r < gz.rows(); ++r) {
                      if (!msk[r]) continue;
                      for (std::size_t c = 0; c < gz.cols(); ++c) {
                        const double onehot = static_cast<int>(c) == lab[r] ? 1.0 : 0.0;
                        gz(r, c) += s * ((*probs)(r, c) - onehot);
                      }
                    }
                  });
}

}  // namespace sgnn::ad
