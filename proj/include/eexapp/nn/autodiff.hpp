#pragma once

// Reverse-mode automatic differentiation over a per-forward expression graph.
// A Graph records every operation as a node; backward() walks nodes in reverse
// creation order (a valid reverse topological order) and accumulates adjoints.
// Parameter leaves reference the Parameter's storage directly and add their
// adjoint into Parameter::grad, so repeated backward passes accumulate.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "eexapp/errors.hpp"
#include "eexapp/nn/tensor.hpp"

namespace eexapp::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  long adam_t = 0;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(value.rows(), value.cols()),
        adam_m(value.rows(), value.cols()),
        adam_v(value.rows(), value.cols()) {
    grad.shape = adam_m.shape = adam_v.shape = value.shape;
  }

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

class Graph;

/// Handle to a node in a Graph.
struct Var {
  Graph* g = nullptr;
  int id = -1;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int)>;

  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
    const char* op = "";
  };

  Graph() { nodes_.reserve(256); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor t) {
    check_finite(t, "constant");
    Node n;
    n.value = std::move(t);
    n.op = "constant";
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  Var param(Parameter& p) {
    if (auto it = param_ids_.find(&p); it != param_ids_.end()) return {this, it->second};
    check_finite(p.value, p.name.c_str());
    Node n;
    n.param = &p;
    n.requires_grad = true;
    n.op = "parameter";
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    param_ids_[&p] = id;
    return {this, id};
  }

  /// Adds an operation node. `fn` receives the graph and the node id and must
  /// push the node's adjoint into its parents via grad().
  Var make(Tensor value, std::vector<int> parents, const char* op, BackwardFn fn) {
    check_finite(value, op);
    Node n;
    n.value = std::move(value);
    n.op = op;
    for (int p : parents) n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(p)].requires_grad;
    if (n.requires_grad) n.backward = std::move(fn);
    n.parents = std::move(parents);
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.param ? n.param->value : n.value;
  }

  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  /// Adjoint buffer of node `id`, allocated as zeros on first touch.
  Tensor& grad(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.data.empty()) {
      const Tensor& v = value(id);
      n.grad = Tensor(v.rows(), v.cols());
      n.grad.shape = v.shape;
    }
    return n.grad;
  }

  void backward(Var loss) {
    if (loss.g != this) throw ArgumentError("backward: loss belongs to another graph");
    if (value(loss.id).size() != 1) throw ArgumentError("backward: loss must be scalar");
    grad(loss.id).data[0] += 1.0;
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.requires_grad || n.grad.data.empty()) continue;
      if (n.param) {
        check_finite(n.grad, n.param->name.c_str());
        for (std::size_t i = 0; i < n.grad.size(); ++i) n.param->grad.data[i] += n.grad.data[i];
      } else if (n.backward) {
        n.backward(*this, id);
        for (int p : nodes_[static_cast<std::size_t>(id)].parents) {
          Node& pn = nodes_[static_cast<std::size_t>(p)];
          if (pn.requires_grad && !pn.grad.data.empty() && !pn.grad.all_finite())
            throw NumericalError(std::string("non-finite gradient flowing out of '") + nodes_[static_cast<std::size_t>(id)].op + "'");
        }
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  static void check_finite(const Tensor& t, const char* op) {
    if (!t.all_finite()) throw NumericalError(std::string("non-finite value produced by '") + op + "'");
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_ids_;
};

inline const Tensor& Var::value() const { return g->value(id); }

// ---------------------------------------------------------------------------
// Operators

namespace detail {

inline void require_same_graph(Var a, Var b) {
  if (a.g != b.g) throw ArgumentError("operands belong to different graphs");
}

// b broadcasts onto a when each of b's dims is 1 or equal to a's.
inline void require_broadcastable(const Tensor& a, const Tensor& b, const char* op) {
  const bool rows_ok = b.rows() == a.rows() || b.rows() == 1;
  const bool cols_ok = b.cols() == a.cols() || b.cols() == 1;
  if (!rows_ok || !cols_ok)
    throw ArgumentError(std::string(op) + ": shape " + b.shape_str() + " does not broadcast onto " + a.shape_str());
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out = a;
  for (double& v : out.data) v = f(v);
  return out;
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  detail::require_same_graph(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows()) throw ArgumentError("matmul: inner dims differ " + A.shape_str() + " x " + B.shape_str());
  const std::size_t n = A.rows(), k = A.cols(), m = B.cols();
  Tensor out(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* o = &out.data[i * m];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A.data[i * k + p];
      if (av == 0.0) continue;
      const double* brow = &B.data[p * m];
      for (std::size_t j = 0; j < m; ++j) o[j] += av * brow[j];
    }
  }
  return a.g->make(std::move(out), {a.id, b.id}, "matmul", [ai = a.id, bi = b.id, n, k, m](Graph& g, int self) {
    const Tensor& G = g.grad(self);
    const Tensor& A = g.value(ai);
    const Tensor& B = g.value(bi);
    if (g.requires_grad(ai)) {
      Tensor& dA = g.grad(ai);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double* grow = &G.data[i * m];
          const double* brow = &B.data[p * m];
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += grow[j] * brow[j];
          dA.data[i * k + p] += s;
        }
    }
    if (g.requires_grad(bi)) {
      Tensor& dB = g.grad(bi);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A.data[i * k + p];
          if (av == 0.0) continue;
          const double* grow = &G.data[i * m];
          double* drow = &dB.data[p * m];
          for (std::size_t j = 0; j < m; ++j) drow[j] += av * grow[j];
        }
    }
  });
}

namespace detail {

// Shared machinery for broadcasting binary elementwise ops. dfa/dfb give the
// local partials given (a, b).
template <typename F, typename DA, typename DB>
Var broadcast_binary(Var a, Var b, const char* op, F f, DA dfa, DB dfb) {
  require_same_graph(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_broadcastable(A, B, op);
  const std::size_t r = A.rows(), c = A.cols();
  const bool br = B.rows() == 1, bc = B.cols() == 1;
  const std::size_t bcols = B.cols();
  Tensor out = A;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double bv = B.data[(br ? 0 : i) * bcols + (bc ? 0 : j)];
      out.data[i * c + j] = f(A.data[i * c + j], bv);
    }
  return a.g->make(std::move(out), {a.id, b.id}, op, [ai = a.id, bi = b.id, r, c, br, bc, bcols, dfa, dfb](Graph& g, int self) {
    const Tensor& G = g.grad(self);
    const Tensor& A = g.value(ai);
    const Tensor& B = g.value(bi);
    const bool need_a = g.requires_grad(ai), need_b = g.requires_grad(bi);
    Tensor* dA = need_a ? &g.grad(ai) : nullptr;
    Tensor* dB = need_b ? &g.grad(bi) : nullptr;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t bidx = (br ? 0 : i) * bcols + (bc ? 0 : j);
        const double av = A.data[i * c + j], bv = B.data[bidx], gv = G.data[i * c + j];
        if (dA) dA->data[i * c + j] += gv * dfa(av, bv);
        if (dB) dB->data[bidx] += gv * dfb(av, bv);
      }
  });
}

template <typename F, typename D>
Var unary(Var a, const char* op, F f, D df) {
  Tensor out = map(a.value(), f);
  return a.g->make(std::move(out), {a.id}, op, [ai = a.id, df](Graph& g, int self) {
    const Tensor& G = g.grad(self);
    const Tensor& A = g.value(ai);
    const Tensor& Y = g.value(self);
    Tensor& dA = g.grad(ai);
    for (std::size_t i = 0; i < A.size(); ++i) dA.data[i] += G.data[i] * df(A.data[i], Y.data[i]);
  });
}

}  // namespace detail

inline Var add(Var a, Var b) {
  return detail::broadcast_binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Var sub(Var a, Var b) {
  return detail::broadcast_binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Var mul(Var a, Var b) {
  return detail::broadcast_binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Var div(Var a, Var b) {
  return detail::broadcast_binary(
      a, b, "div", [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

inline Var scale(Var a, double s) {
  return detail::unary(a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Var add_scalar(Var a, double s) {
  return detail::unary(a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

inline Var neg(Var a) { return scale(a, -1.0); }

inline Var tanh(Var a) {
  return detail::unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var relu(Var a) {
  return detail::unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
                       [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var leaky_relu(Var a, double slope = 0.2) {
  return detail::unary(a, "leaky_relu", [slope](double x) { return x > 0.0 ? x : slope * x; },
                       [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

inline Var exp(Var a) {
  return detail::unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(Var a) {
  return detail::unary(a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var square(Var a) {
  return detail::unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

/// Elementwise Huber function with threshold zeta.
inline Var huber(Var a, double zeta) {
  return detail::unary(
      a, "huber",
      [zeta](double x) { return std::abs(x) <= zeta ? 0.5 * x * x : zeta * (std::abs(x) - 0.5 * zeta); },
      [zeta](double x, double) { return std::abs(x) <= zeta ? x : (x > 0.0 ? zeta : -zeta); });
}

inline Var transpose(Var a) {
  const Tensor& A = a.value();
  const std::size_t r = A.rows(), c = A.cols();
  Tensor out(c, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data[j * r + i] = A.data[i * c + j];
  return a.g->make(std::move(out), {a.id}, "transpose", [ai = a.id, r, c](Graph& g, int self) {
    const Tensor& G = g.grad(self);
    Tensor& dA = g.grad(ai);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dA.data[i * c + j] += G.data[j * r + i];
  });
}

/// Columns [c0, c1).
inline Var slice_cols(Var a, std::size_t c0, std::size_t c1) {
  const Tensor& A = a.value();
  if (c0 > c1 || c1 > A.cols()) throw ArgumentError("slice_cols: range out of bounds");
  const std::size_t r = A.rows(), c = A.cols(), w = c1 - c0;
  Tensor out(r, w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out.data[i * w + j] = A.data[i * c + c0 + j];
  return a.g->make(std::move(out), {a.id}, "slice_cols", [ai = a.id, r, c, c0, w](Graph& g, int self) {
    const Tensor& G = g.grad(self);
    Tensor& dA = g.grad(ai);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) dA.data[i * c + c0 + j] += G.data[i * w + j];
  });
}

inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: no operands");
  Graph* g = parts[0].g;
  const std::size_t r = parts[0].rows();
  std::size_t total = 0;
  std::vector<int> ids;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    if (p.g != g) throw ArgumentError("concat_cols: operands belong to different graphs");
    if (p.rows() != r) throw ArgumentError("concat_cols: row counts differ");
    ids.push_back(p.id);
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor out(r, total);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& P = p.value();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < P.cols(); ++j) out.data[i * total + off + j] = P.data[i * P.cols() + j];
    off += P.cols();
  }
  return g->make(std::move(out), ids, "concat_cols", [ids, widths, r, total](Graph& g, int self) {
    const Tensor& G = g.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const std::size_t w = widths[k];
      if (g.requires_grad(ids[k])) {
        Tensor& d = g.grad(ids[k]);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j) d.data[i * w + j] += G.data[i * total + off + j];
      }
      off += w;
    }
  });
}

inline Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat_rows: no operands");
  Graph* g = parts[0].g;
  const std::size_t c = parts[0].cols();
  std::vector<int> ids;
  std::vector<std::size_t> sizes;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (p.g != g) throw ArgumentError("concat_rows: operands belong to different graphs");
    if (p.cols() != c) throw ArgumentError("concat_rows: column counts differ");
    ids.push_back(p.id);
    sizes.push_back(p.value().size());
    rows += p.rows();
  }
  Tensor out(rows, c);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& P = p.value();
    std::copy(P.data.begin(), P.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
    off += P.size();
  }
  return g->make(std::move(out), ids, "concat_rows", [ids, sizes](Graph& g, int self) {
    const Tensor& G = g.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (g.requires_grad(ids[k])) {
        Tensor& d = g.grad(ids[k]);
        for (std::size_t i = 0; i < sizes[k]; ++i) d.data[i] += G.data[off + i];
      }
      off += sizes[k];
    }
  });
}

/// Row r picks column idx[r]; result is rows x 1.
inline Var gather_cols(Var a, std::span<const int> idx) {
  const Tensor& A = a.value();
  const std::size_t r = A.rows(), c = A.cols();
  if (idx.size() != r) throw ArgumentError("gather_cols: one index per row required");
  std::vector<int> ix(idx.begin(), idx.end());
  Tensor out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    if (ix[i] < 0 || static_cast<std::size_t>(ix[i]) >= c) throw ArgumentError("gather_cols: index out of range");
    out.data[i] = A.data[i * c + static_cast<std::size_t>(ix[i])];
  }
  return a.g->make(std::move(out), {a.id}, "gather_cols", [ai = a.id, ix, c](Graph& g, int self) {
    const Tensor& G = g.grad(self);
    Tensor& dA = g.grad(ai);
    for (std::size_t i = 0; i < ix.size(); ++i) dA.data[i * c + static_cast<std::size_t>(ix[i])] += G.data[i];
  });
}

/// rows x cols -> 1 x cols
inline Var mean_rows(Var a) {
  const Tensor& A = a.value();
  const std::size_t r = A.rows(), c = A.cols();
  if (r == 0) throw ArgumentError("mean_rows: no rows");
  Tensor out(1, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data[j] += A.data[i * c + j];
  for (double& v : out.data) v /= static_cast<double>(r);
  return a.g->make(std::move(out), {a.id}, "mean_rows", [ai = a.id, r, c](Graph& g, int self) {
    const Tensor& G = g.grad(self);
    Tensor& dA = g.grad(ai);
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dA.data[i * c + j] += G.data[j] * inv;
  });
}

/// rows x cols -> rows x 1
inline Var sum_cols(Var a) {
  const Tensor& A = a.value();
  const std::size_t r = A.rows(), c = A.cols();
  Tensor out(r, 1);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data[i] += A.data[i * c + j];
  return a.g->make(std::move(out), {a.id}, "sum_cols", [ai = a.id, r, c](Graph& g, int self) {
    const Tensor& G = g.grad(self);
    Tensor& dA = g.grad(ai);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) dA.data[i * c + j] += G.data[i];
  });
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  return a.g->make(Tensor::scalar(s), {a.id}, "sum", [ai = a.id](Graph& g, int self) {
    const double gv = g.grad(self).data[0];
    for (double& d : g.grad(ai).data) d += gv;
  });
}

inline Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ArgumentError("mean: empty tensor");
  return scale(sum(a), 1.0 / n);
}

inline Var softmax_rows(Var a) {
  const Tensor& A = a.value();
  const std::size_t r = A.rows(), c = A.cols();
  Tensor out(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = &A.data[i * c];
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (out.data[i * c + j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] /= z;
  }
  return a.g->make(std::move(out), {a.id}, "softmax_rows", [ai = a.id, r, c](Graph& g, int self) {
    const Tensor& G = g.grad(self);
    const Tensor& Y = g.value(self);
    Tensor& dA = g.grad(ai);
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += G.data[i * c + j] * Y.data[i * c + j];
      for (std::size_t j = 0; j < c; ++j) dA.data[i * c + j] += Y.data[i * c + j] * (G.data[i * c + j] - dot);
    }
  });
}

inline Var log_softmax_rows(Var a) {
  const Tensor& A = a.value();
  const std::size_t r = A.rows(), c = A.cols();
  Tensor out(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = &A.data[i * c];
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(x[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] = x[j] - lse;
  }
  return a.g->make(std::move(out), {a.id}, "log_softmax_rows", [ai = a.id, r, c](Graph& g, int self) {
    const Tensor& G = g.grad(self);
    const Tensor& Y = g.value(self);
    Tensor& dA = g.grad(ai);
    for (std::size_t i = 0; i < r; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < c; ++j) gs += G.data[i * c + j];
      for (std::size_t j = 0; j < c; ++j) dA.data[i * c + j] += G.data[i * c + j] - std::exp(Y.data[i * c + j]) * gs;
    }
  });
}

/// Per-row normalization to zero mean / unit variance, then gain and bias
/// (both 1 x cols).
inline Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5) {
  const Tensor& X = x.value();
  const std::size_t r = X.rows(), c = X.cols();
  if (gain.cols() != c || bias.cols() != c || gain.rows() != 1 || bias.rows() != 1)
    throw ArgumentError("layer_norm_rows: gain/bias must be 1 x cols");
  const Tensor& Gm = gain.value();
  const Tensor& Bt = bias.value();
  Tensor xhat(r, c);
  std::vector<double> inv_std(r);
  Tensor out(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += X.data[i * c + j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (X.data[i * c + j] - mu) * (X.data[i * c + j] - mu);
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat.data[i * c + j] = (X.data[i * c + j] - mu) * inv_std[i];
      out.data[i * c + j] = xhat.data[i * c + j] * Gm.data[j] + Bt.data[j];
    }
  }
  return x.g->make(std::move(out), {x.id, gain.id, bias.id}, "layer_norm_rows",
                   [xi = x.id, gi = gain.id, bi = bias.id, r, c, xhat = std::move(xhat), inv_std](Graph& g, int self) {
                     const Tensor& G = g.grad(self);
                     const Tensor& Gm = g.value(gi);
                     if (g.requires_grad(gi)) {
                       Tensor& dG = g.grad(gi);
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j) dG.data[j] += G.data[i * c + j] * xhat.data[i * c + j];
                     }
                     if (g.requires_grad(bi)) {
                       Tensor& dB = g.grad(bi);
                       for (std::size_t i = 0; i < r; ++i)
                         for (std::size_t j = 0; j < c; ++j) dB.data[j] += G.data[i * c + j];
                     }
                     if (g.requires_grad(xi)) {
                       Tensor& dX = g.grad(xi);
                       const double n = static_cast<double>(c);
                       for (std::size_t i = 0; i < r; ++i) {
                         double s1 = 0.0, s2 = 0.0;
                         for (std::size_t j = 0; j < c; ++j) {
                           const double dxh = G.data[i * c + j] * Gm.data[j];
                           s1 += dxh;
                           s2 += dxh * xhat.data[i * c + j];
                         }
                         for (std::size_t j = 0; j < c; ++j) {
                           const double dxh = G.data[i * c + j] * Gm.data[j];
                           dX.data[i * c + j] += inv_std[i] / n * (n * dxh - s1 - xhat.data[i * c + j] * s2);
                         }
                       }
                     }
                   });
}

/// PPO clipped surrogate per sample: min(rho*A, clip(rho, 1-eps, 1+eps)*A)
/// with rho = exp(logp_new - logp_old). logp_new is rows x 1. The gradient is
/// zero for samples where the clipped (constant) branch is selected.
inline Var clipped_surrogate(Var logp_new, std::span<const double> logp_old, std::span<const double> advantages,
                             double eps) {
  const Tensor& L = logp_new.value();
  const std::size_t n = L.size();
  if (logp_old.size() != n || advantages.size() != n)
    throw ArgumentError("clipped_surrogate: logp_old/advantages length must match logp_new");
  Tensor out(n, 1);
  std::vector<double> dval(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double rho = std::exp(L.data[i] - logp_old[i]);
    const double a = advantages[i];
    const double unclipped = rho * a;
    const double clipped = std::clamp(rho, 1.0 - eps, 1.0 + eps) * a;
    if (unclipped <= clipped) {
      out.data[i] = unclipped;
      dval[i] = unclipped;  // d(rho*A)/dlogp = rho*A
    } else {
      out.data[i] = clipped;
      dval[i] = 0.0;
    }
  }
  return logp_new.g->make(std::move(out), {logp_new.id}, "clipped_surrogate",
                          [li = logp_new.id, dval = std::move(dval)](Graph& g, int self) {
                            const Tensor& G = g.grad(self);
                            Tensor& dL = g.grad(li);
                            for (std::size_t i = 0; i < dval.size(); ++i) dL.data[i] += G.data[i] * dval[i];
                          });
}

/// Copy of `a` that blocks gradient flow.
inline Var stop_gradient(Var a) { return a.g->constant(a.value()); }

}  // namespace eexapp::nn
