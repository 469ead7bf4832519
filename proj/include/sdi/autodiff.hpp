#pragma once

// Reverse-mode gradient tape over a closed op vocabulary. Nodes are appended
// in evaluation order, so the node list is already topologically sorted and
// backward is a single reverse sweep.

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sdi/error.hpp"
#include "sdi/tensor.hpp"

namespace sdi {

template <typename T>
class Tape;

template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Tensor<T>& value() const { return tape->value(*this); }
  const std::vector<int>& shape() const { return value().shape(); }
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push(std::move(value), {}, nullptr, "constant", false); }
  Var<T> leaf(Tensor<T> value) { return push(std::move(value), {}, nullptr, "leaf", true); }

  // Appends an op result. `backward` reads this node's gradient and
  // accumulates into its inputs through accumulate().
  Var<T> push(Tensor<T> value, std::vector<int> inputs, BackwardFn backward, const char* op,
              bool force_grad = false) {
    bool needs = force_grad;
    for (int i : inputs) needs = needs || nodes_[static_cast<std::size_t>(i)].requires_grad;
    nodes_.push_back(Node{std::move(value), Tensor<T>(), std::move(inputs), needs ? std::move(backward) : nullptr,
                          needs, false, op});
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<T>& value(Var<T> v) const { return node(v.id).value; }
  const Tensor<T>& value(int id) const { return node(id).value; }
  const char* op(int id) const { return node(id).op; }
  bool requires_grad(int id) const { return node(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient of the last backward target; zeros for unreached nodes.
  Tensor<T> grad(Var<T> v) const {
    const Node& n = node(v.id);
    if (n.has_grad) return n.grad;
    return Tensor<T>(n.value.shape());
  }

  const Tensor<T>& grad_of(int id) { return grad_ref(id); }

  void accumulate(int id, const Tensor<T>& g) {
    Node& n = node(id);
    if (!n.requires_grad) return;
    Tensor<T>& dst = grad_ref(id);
    if (dst.size() != g.size()) throw ArgumentError(std::string("gradient shape mismatch at op ") + n.op);
    T* d = dst.data();
    const T* s = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += s[i];
  }

  bool wants_grad(int id) const { return node(id).requires_grad; }

  Tensor<T>& grad_ref(int id) {
    Node& n = node(id);
    if (!n.has_grad) {
      n.grad = Tensor<T>(n.value.shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  void zero_grad() {
    for (auto& n : nodes_) {
      n.grad = Tensor<T>();
      n.has_grad = false;
    }
  }

  void backward(Var<T> output) {
    if (value(output).size() != 1)
      throw ArgumentError("backward: output must be a scalar, got shape " + shape_string(value(output).shape()));
    backward_seeded({{output, Tensor<T>(value(output).shape(), T(1))}});
  }

  // Reverse sweep from several outputs with explicit seed gradients.
  void backward_seeded(const std::vector<std::pair<Var<T>, Tensor<T>>>& seeds) {
    zero_grad();
    int last = -1;
    for (const auto& [v, g] : seeds) {
      if (g.size() != value(v).size()) throw ArgumentError("backward: seed shape mismatch");
      accumulate(v.id, g);
      last = std::max(last, v.id);
    }
    for (int id = last; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.requires_grad || !n.has_grad || !n.backward) continue;
      n.backward(*this, id);
    }
  }

  const std::vector<int>& inputs(int id) const { return node(id).inputs; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool has_grad = false;
    const char* op = "";
  };

  Node& node(int id) {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) throw ArgumentError("Tape: invalid variable");
    return nodes_[static_cast<std::size_t>(id)];
  }
  const Node& node(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) throw ArgumentError("Tape: invalid variable");
    return nodes_[static_cast<std::size_t>(id)];
  }

  std::vector<Node> nodes_;
};

namespace ops {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
ConstMatMap<T> as_matrix(const Tensor<T>& t) {
  return ConstMatMap<T>(t.data(), t.rows(), t.cols());
}
template <typename T>
MatMap<T> as_matrix(Tensor<T>& t) {
  return MatMap<T>(t.data(), t.rows(), t.cols());
}

namespace detail {
template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ArgumentError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                        shape_string(b.shape()));
}
template <typename T>
void require_matrix(const Tensor<T>& a, const char* op) {
  if (a.rank() > 2) throw ArgumentError(std::string(op) + ": expected rank <= 2, got " + shape_string(a.shape()));
}

// Shared pattern for ops y = f(x) elementwise with dy/dx = g(x, y).
template <typename T, typename F, typename G>
Var<T> unary(Var<T> x, F f, G dfdx, const char* op) {
  Tape<T>& tape = *x.tape;
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = f(xv[i]);
  const int xid = x.id;
  return tape.push(std::move(y), {xid},
                   [xid, dfdx](Tape<T>& t, int self) {
                     const Tensor<T>& xv = t.value(xid);
                     const Tensor<T>& yv = t.value(self);
                     const Tensor<T>& gy = t.grad_ref(self);
                     Tensor<T> gx(xv.shape());
                     for (std::size_t i = 0; i < xv.size(); ++i) gx[i] = gy[i] * dfdx(xv[i], yv[i]);
                     t.accumulate(xid, gx);
                   },
                   op);
}
}  // namespace detail

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  Tape<T>& tape = *a.tape;
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  detail::require_matrix(av, "matmul");
  detail::require_matrix(bv, "matmul");
  if (av.cols() != bv.rows())
    throw ArgumentError("matmul: shape mismatch " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  Tensor<T> c({av.rows(), bv.cols()});
  as_matrix(c).noalias() = as_matrix(av) * as_matrix(bv);
  const int aid = a.id;
  const int bid = b.id;
  return tape.push(std::move(c), {aid, bid},
                   [aid, bid](Tape<T>& t, int self) {
                     const Tensor<T>& gc = t.grad_ref(self);
                     if (t.wants_grad(aid)) {
                       const Tensor<T>& bv = t.value(bid);
                       Tensor<T> ga(t.value(aid).shape());
                       as_matrix(ga).noalias() = as_matrix(gc) * as_matrix(bv).transpose();
                       t.accumulate(aid, ga);
                     }
                     if (t.wants_grad(bid)) {
                       const Tensor<T>& av = t.value(aid);
                       Tensor<T> gb(t.value(bid).shape());
                       as_matrix(gb).noalias() = as_matrix(av).transpose() * as_matrix(gc);
                       t.accumulate(bid, gb);
                     }
                   },
                   "matmul");
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tape = *a.tape;
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  detail::require_same_shape(av, bv, "add");
  Tensor<T> c(av.shape());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = av[i] + bv[i];
  const int aid = a.id;
  const int bid = b.id;
  return tape.push(std::move(c), {aid, bid},
                   [aid, bid](Tape<T>& t, int self) {
                     const Tensor<T> g = t.grad_ref(self);
                     t.accumulate(aid, g);
                     t.accumulate(bid, g);
                   },
                   "add");
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& tape = *a.tape;
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  detail::require_same_shape(av, bv, "sub");
  Tensor<T> c(av.shape());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = av[i] - bv[i];
  const int aid = a.id;
  const int bid = b.id;
  return tape.push(std::move(c), {aid, bid},
                   [aid, bid](Tape<T>& t, int self) {
                     Tensor<T> g = t.grad_ref(self);
                     t.accumulate(aid, g);
                     for (auto& v : g.values()) v = -v;
                     t.accumulate(bid, g);
                   },
                   "sub");
}

// Elementwise product.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T>& tape = *a.tape;
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  detail::require_same_shape(av, bv, "mul");
  Tensor<T> c(av.shape());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = av[i] * bv[i];
  const int aid = a.id;
  const int bid = b.id;
  return tape.push(std::move(c), {aid, bid},
                   [aid, bid](Tape<T>& t, int self) {
                     const Tensor<T>& g = t.grad_ref(self);
                     if (t.wants_grad(aid)) {
                       Tensor<T> ga = t.value(bid);
                       for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= g[i];
                       t.accumulate(aid, ga);
                     }
                     if (t.wants_grad(bid)) {
                       Tensor<T> gb = t.value(aid);
                       for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= g[i];
                       t.accumulate(bid, gb);
                     }
                   },
                   "mul");
}

// a (rows x cols) + row (cols), broadcast over rows.
template <typename T>
Var<T> add_row(Var<T> a, Var<T> row) {
  Tape<T>& tape = *a.tape;
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& rv = tape.value(row);
  detail::require_matrix(av, "add_row");
  if (rv.size() != static_cast<std::size_t>(av.cols()))
    throw ArgumentError("add_row: row of shape " + shape_string(rv.shape()) + " for matrix " + shape_string(av.shape()));
  Tensor<T> c = av;
  const int r = av.rows();
  const int k = av.cols();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < k; ++j) c(i, j) += rv[static_cast<std::size_t>(j)];
  const int aid = a.id;
  const int rid = row.id;
  return tape.push(std::move(c), {aid, rid},
                   [aid, rid, r, k](Tape<T>& t, int self) {
                     const Tensor<T> g = t.grad_ref(self);
                     t.accumulate(aid, g);
                     if (t.wants_grad(rid)) {
                       Tensor<T>& gr = t.grad_ref(rid);
                       for (int i = 0; i < r; ++i)
                         for (int j = 0; j < k; ++j) gr[static_cast<std::size_t>(j)] += g(i, j);
                     }
                   },
                   "add_row");
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  return detail::unary(a, [s](T x) { return s * x; }, [s](T, T) { return s; }, "scale");
}

template <typename T>
Var<T> reshape(Var<T> a, std::vector<int> shape) {
  Tape<T>& tape = *a.tape;
  Tensor<T> out = tape.value(a).reshaped(std::move(shape));
  const int aid = a.id;
  return tape.push(std::move(out), {aid},
                   [aid](Tape<T>& t, int self) {
                     t.accumulate(aid, t.grad_ref(self).reshaped(t.value(aid).shape()));
                   },
                   "reshape");
}

template <typename T>
Var<T> transpose(Var<T> a) {
  Tape<T>& tape = *a.tape;
  const Tensor<T>& av = tape.value(a);
  detail::require_matrix(av, "transpose");
  Tensor<T> out({av.cols(), av.rows()});
  as_matrix(out) = as_matrix(av).transpose();
  const int aid = a.id;
  return tape.push(std::move(out), {aid},
                   [aid](Tape<T>& t, int self) {
                     const Tensor<T>& g = t.grad_ref(self);
                     Tensor<T> ga(t.value(aid).shape());
                     as_matrix(ga) = as_matrix(g).transpose();
                     t.accumulate(aid, ga);
                   },
                   "transpose");
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ArgumentError("concat_rows: no inputs");
  Tape<T>& tape = *parts[0].tape;
  const int k = tape.value(parts[0]).cols();
  int rows = 0;
  std::vector<int> ids;
  for (const auto& p : parts) {
    const Tensor<T>& v = tape.value(p);
    detail::require_matrix(v, "concat_rows");
    if (v.cols() != k) throw ArgumentError("concat_rows: column count mismatch");
    rows += v.rows();
    ids.push_back(p.id);
  }
  Tensor<T> out({rows, k});
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Tensor<T>& v = tape.value(p);
    std::copy(v.data(), v.data() + v.size(), out.data() + offset);
    offset += v.size();
  }
  return tape.push(std::move(out), ids,
                   [ids](Tape<T>& t, int self) {
                     const Tensor<T>& g = t.grad_ref(self);
                     std::size_t offset = 0;
                     for (int id : ids) {
                       const Tensor<T>& v = t.value(id);
                       if (t.wants_grad(id)) {
                         Tensor<T> gi(v.shape());
                         std::copy(g.data() + offset, g.data() + offset + v.size(), gi.data());
                         t.accumulate(id, gi);
                       }
                       offset += v.size();
                     }
                   },
                   "concat_rows");
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: no inputs");
  Tape<T>& tape = *parts[0].tape;
  const int r = tape.value(parts[0]).rows();
  int cols = 0;
  std::vector<int> ids;
  std::vector<int> widths;
  for (const auto& p : parts) {
    const Tensor<T>& v = tape.value(p);
    detail::require_matrix(v, "concat_cols");
    if (v.rows() != r) throw ArgumentError("concat_cols: row count mismatch");
    cols += v.cols();
    ids.push_back(p.id);
    widths.push_back(v.cols());
  }
  Tensor<T> out({r, cols});
  int c0 = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor<T>& v = tape.value(parts[p]);
    as_matrix(out).block(0, c0, r, widths[p]) = as_matrix(v);
    c0 += widths[p];
  }
  return tape.push(std::move(out), ids,
                   [ids, widths, r](Tape<T>& t, int self) {
                     const Tensor<T>& g = t.grad_ref(self);
                     int c0 = 0;
                     for (std::size_t p = 0; p < ids.size(); ++p) {
                       if (t.wants_grad(ids[p])) {
                         Tensor<T> gi(t.value(ids[p]).shape());
                         as_matrix(gi) = as_matrix(g).block(0, c0, r, widths[p]);
                         t.accumulate(ids[p], gi);
                       }
                       c0 += widths[p];
                     }
                   },
                   "concat_cols");
}

template <typename T>
Var<T> slice_rows(Var<T> a, int start, int count) {
  Tape<T>& tape = *a.tape;
  const Tensor<T>& av = tape.value(a);
  detail::require_matrix(av, "slice_rows");
  if (start < 0 || count < 0 || start + count > av.rows()) throw ArgumentError("slice_rows: out of range");
  const int k = av.cols();
  Tensor<T> out({count, k});
  std::copy(av.data() + static_cast<std::size_t>(start) * k, av.data() + static_cast<std::size_t>(start + count) * k,
            out.data());
  const int aid = a.id;
  return tape.push(std::move(out), {aid},
                   [aid, start, k](Tape<T>& t, int self) {
                     const Tensor<T>& g = t.grad_ref(self);
                     Tensor<T>& ga = t.grad_ref(aid);
                     T* dst = ga.data() + static_cast<std::size_t>(start) * k;
                     for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                   },
                   "slice_rows");
}

template <typename T>
Var<T> slice_cols(Var<T> a, int start, int count) {
  Tape<T>& tape = *a.tape;
  const Tensor<T>& av = tape.value(a);
  detail::require_matrix(av, "slice_cols");
  if (start < 0 || count < 0 || start + count > av.cols()) throw ArgumentError("slice_cols: out of range");
  const int r = av.rows();
  Tensor<T> out({r, count});
  as_matrix(out) = as_matrix(av).block(0, start, r, count);
  const int aid = a.id;
  return tape.push(std::move(out), {aid},
                   [aid, start, count, r](Tape<T>& t, int self) {
                     const Tensor<T>& g = t.grad_ref(self);
                     Tensor<T>& ga = t.grad_ref(aid);
                     as_matrix(ga).block(0, start, r, count) += as_matrix(g);
                   },
                   "slice_cols");
}

// Rows of `table` selected by index (embedding lookup).
template <typename T>
Var<T> gather_rows(Var<T> table, std::vector<int> indices) {
  Tape<T>& tape = *table.tape;
  const Tensor<T>& tv = tape.value(table);
  detail::require_matrix(tv, "gather_rows");
  const int k = tv.cols();
  Tensor<T> out({static_cast<int>(indices.size()), k});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= tv.rows()) throw ArgumentError("gather_rows: index out of range");
    std::copy(tv.data() + static_cast<std::size_t>(indices[i]) * k,
              tv.data() + static_cast<std::size_t>(indices[i] + 1) * k, out.data() + i * k);
  }
  const int tid = table.id;
  return tape.push(std::move(out), {tid},
                   [tid, indices = std::move(indices), k](Tape<T>& t, int self) {
                     const Tensor<T>& g = t.grad_ref(self);
                     Tensor<T>& gt = t.grad_ref(tid);
                     for (std::size_t i = 0; i < indices.size(); ++i)
                       for (int j = 0; j < k; ++j)
                         gt[static_cast<std::size_t>(indices[i]) * k + j] += g[i * k + j];
                   },
                   "gather_rows");
}

template <typename T>
Var<T> softmax_rows(Var<T> a) {
  Tape<T>& tape = *a.tape;
  const Tensor<T>& av = tape.value(a);
  detail::require_matrix(av, "softmax");
  if (av.cols() == 0) throw ArgumentError("softmax: empty axis");
  Tensor<T> y(av.shape());
  const int r = av.rows();
  const int k = av.cols();
  for (int i = 0; i < r; ++i) {
    T m = av(i, 0);
    for (int j = 1; j < k; ++j) m = std::max(m, av(i, j));
    T s = 0;
    for (int j = 0; j < k; ++j) s += (y(i, j) = std::exp(av(i, j) - m));
    for (int j = 0; j < k; ++j) y(i, j) /= s;
  }
  const int aid = a.id;
  return tape.push(std::move(y), {aid},
                   [aid, r, k](Tape<T>& t, int self) {
                     const Tensor<T>& y = t.value(self);
                     const Tensor<T>& g = t.grad_ref(self);
                     Tensor<T> ga(y.shape());
                     for (int i = 0; i < r; ++i) {
                       T dot = 0;
                       for (int j = 0; j < k; ++j) dot += g(i, j) * y(i, j);
                       for (int j = 0; j < k; ++j) ga(i, j) = y(i, j) * (g(i, j) - dot);
                     }
                     t.accumulate(aid, ga);
                   },
                   "softmax");
}

template <typename T>
Var<T> log_softmax_rows(Var<T> a) {
  Tape<T>& tape = *a.tape;
  const Tensor<T>& av = tape.value(a);
  detail::require_matrix(av, "log_softmax");
  if (av.cols() == 0) throw ArgumentError("log_softmax: empty axis");
  Tensor<T> y(av.shape());
  const int r = av.rows();
  const int k = av.cols();
  for (int i = 0; i < r; ++i) {
    T m = av(i, 0);
    for (int j = 1; j < k; ++j) m = std::max(m, av(i, j));
    T s = 0;
    for (int j = 0; j < k; ++j) s += std::exp(av(i, j) - m);
    const T lse = m + std::log(s);
    for (int j = 0; j < k; ++j) y(i, j) = av(i, j) - lse;
  }
  const int aid = a.id;
  return tape.push(std::move(y), {aid},
                   [aid, r, k](Tape<T>& t, int self) {
                     const Tensor<T>& y = t.value(self);
                     const Tensor<T>& g = t.grad_ref(self);
                     Tensor<T> ga(y.shape());
                     for (int i = 0; i < r; ++i) {
                       T total = 0;
                       for (int j = 0; j < k; ++j) total += g(i, j);
                       for (int j = 0; j < k; ++j) ga(i, j) = g(i, j) - std::exp(y(i, j)) * total;
                     }
                     t.accumulate(aid, ga);
                   },
                   "log_softmax");
}

// Row-wise layer normalization with population variance.
template <typename T>
Var<T> layer_norm_rows(Var<T> a, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
  Tape<T>& tape = *a.tape;
  const Tensor<T>& av = tape.value(a);
  detail::require_matrix(av, "layer_norm");
  const int r = av.rows();
  const int k = av.cols();
  if (k == 0) throw ArgumentError("layer_norm: empty axis");
  if (tape.value(gain).size() != static_cast<std::size_t>(k) || tape.value(bias).size() != static_cast<std::size_t>(k))
    throw ArgumentError("layer_norm: gain/bias length must equal the row length");
  const Tensor<T>& gv = tape.value(gain);
  const Tensor<T>& bv = tape.value(bias);
  Tensor<T> xhat(av.shape());
  std::vector<T> inv_std(static_cast<std::size_t>(r));
  Tensor<T> y(av.shape());
  for (int i = 0; i < r; ++i) {
    T mean = 0;
    for (int j = 0; j < k; ++j) mean += av(i, j);
    mean /= k;
    T var = 0;
    for (int j = 0; j < k; ++j) var += (av(i, j) - mean) * (av(i, j) - mean);
    var /= k;
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    for (int j = 0; j < k; ++j) {
      xhat(i, j) = (av(i, j) - mean) * is;
      y(i, j) = xhat(i, j) * gv[static_cast<std::size_t>(j)] + bv[static_cast<std::size_t>(j)];
    }
  }
  const int aid = a.id;
  const int gid = gain.id;
  const int bid = bias.id;
  return tape.push(std::move(y), {aid, gid, bid},
                   [aid, gid, bid, r, k, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t, int self) {
                     const Tensor<T>& g = t.grad_ref(self);
                     const Tensor<T>& gv = t.value(gid);
                     if (t.wants_grad(gid) || t.wants_grad(bid)) {
                       Tensor<T> gg(gv.shape());
                       Tensor<T> gb(gv.shape());
                       for (int i = 0; i < r; ++i)
                         for (int j = 0; j < k; ++j) {
                           gg[static_cast<std::size_t>(j)] += g(i, j) * xhat(i, j);
                           gb[static_cast<std::size_t>(j)] += g(i, j);
                         }
                       t.accumulate(gid, gg);
                       t.accumulate(bid, gb);
                     }
                     if (t.wants_grad(aid)) {
                       Tensor<T> ga(t.value(aid).shape());
                       for (int i = 0; i < r; ++i) {
                         T sum_d = 0;
                         T sum_dx = 0;
                         for (int j = 0; j < k; ++j) {
                           const T d = g(i, j) * gv[static_cast<std::size_t>(j)];
                           sum_d += d;
                           sum_dx += d * xhat(i, j);
                         }
                         const T is = inv_std[static_cast<std::size_t>(i)];
                         for (int j = 0; j < k; ++j) {
                           const T d = g(i, j) * gv[static_cast<std::size_t>(j)];
                           ga(i, j) = is * (d - sum_d / k - xhat(i, j) * sum_dx / k);
                         }
                       }
                       t.accumulate(aid, ga);
                     }
                   },
                   "layer_norm");
}

// Exact (erf) GELU.
template <typename T>
Var<T> gelu(Var<T> a) {
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  constexpr T inv_sqrt2pi = T(0.39894228040143267794);
  return detail::unary(
      a, [](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); },
      [](T x, T) { return T(0.5) * (T(1) + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(T(-0.5) * x * x); },
      "gelu");
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  return detail::unary(
      a, [](T x) { return x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x)); },
      [](T, T y) { return y * (T(1) - y); }, "sigmoid");
}

template <typename T>
Var<T> log(Var<T> a) {
  for (T v : a.value().values())
    if (!(v > 0)) throw ArgumentError("log: non-positive input");
  if (a.value().size() == 0) throw ArgumentError("log: empty input");
  return detail::unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; }, "log");
}

// max(0, x); subgradient 0 at the kink.
template <typename T>
Var<T> relu(Var<T> a) {
  return detail::unary(a, [](T x) { return x > 0 ? x : T(0); }, [](T x, T) { return x > 0 ? T(1) : T(0); }, "relu");
}

template <typename T>
Var<T> sum(Var<T> a) {
  Tape<T>& tape = *a.tape;
  const Tensor<T>& av = tape.value(a);
  T s = 0;
  for (T v : av.values()) s += v;
  const int aid = a.id;
  return tape.push(Tensor<T>::scalar(s), {aid},
                   [aid](Tape<T>& t, int self) {
                     const T g = t.grad_ref(self).item();
                     t.accumulate(aid, Tensor<T>(t.value(aid).shape(), g));
                   },
                   "sum");
}

template <typename T>
Var<T> mean(Var<T> a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ArgumentError("mean: empty input");
  return scale(sum(a), T(1) / static_cast<T>(n));
}

}  // namespace ops
}  // namespace sdi
