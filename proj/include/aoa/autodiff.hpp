#pragma once

// Tape-based reverse-mode differentiation over dense Tensors.
//
// A Tape records every forward operation in creation order. Creation order is
// a valid topological order, so backward() walks the tape once from the root
// toward the leaves; gradient accumulation order is therefore fixed and runs
// are bit-reproducible. Trainable values live in a ParamStore outside the
// tape; binding a Param to a tape makes it a leaf whose gradient is added into
// Param::grad when backward() runs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "aoa/tensor.hpp"
#include "aoa/util.hpp"

namespace aoa {

struct Param {
  std::string name;
  std::string group = "main";
  Tensor value;
  Tensor grad;
  bool frozen = false;
};

using Snapshot = std::map<std::string, Tensor>;

// Owns parameters with stable addresses; layers keep non-owning Param*.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Param& add(std::string name, Shape shape, std::string group = "main") {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    auto p = std::make_unique<Param>();
    p->name = name;
    p->group = std::move(group);
    p->value = Tensor(shape);
    p->grad = Tensor(std::move(shape));
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Param* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  const Param* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : params_[it->second].get();
  }
  Param& at(const std::string& name) {
    if (Param* p = find(name)) return *p;
    throw std::out_of_range("no parameter named " + name);
  }

  std::size_t count() const { return params_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  template <class Fn>
  void for_each(Fn&& fn) {
    for (auto& p : params_) fn(*p);
  }
  template <class Fn>
  void for_each(Fn&& fn) const {
    for (const auto& p : params_) fn(static_cast<const Param&>(*p));
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p->grad.values().begin(), p->grad.values().end(), 0.0);
  }

  // Marks every parameter whose name starts with one of the prefixes frozen.
  void freeze(const std::vector<std::string>& prefixes) {
    for (auto& p : params_) {
      p->frozen = false;
      for (const auto& prefix : prefixes) {
        if (p->name.rfind(prefix, 0) == 0) p->frozen = true;
      }
    }
  }

  Snapshot snapshot() const {
    Snapshot out;
    for (const auto& p : params_) out.emplace(p->name, p->value);
    return out;
  }

  void restore(const Snapshot& snap) {
    for (auto& p : params_) {
      auto it = snap.find(p->name);
      if (it == snap.end()) throw std::invalid_argument("snapshot lacks parameter " + p->name);
      if (it->second.shape() != p->value.shape()) {
        throw ShapeError("snapshot shape mismatch for " + p->name + ": " +
                         shape_str(it->second.shape()) + " vs " + shape_str(p->value.shape()));
      }
      p->value = it->second;
    }
  }

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
inline void init_uniform(Param& p, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (double& v : p.value.values()) v = rng.uniform(-bound, bound);
}

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const { return value()[0]; }

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  struct Node {
    Tensor value;
    std::vector<double> grad;
    Backward backward;
    Param* param = nullptr;
    bool requires_grad = false;
  };

  // With record_grad = false the tape only evaluates; nothing is retained for
  // a backward pass.
  explicit Tape(bool record_grad = true) : record_(record_grad) { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, false});
    return {this, nodes_.size() - 1};
  }

  Var input(Param& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return {this, it->second};
    const bool grad = record_ && !p.frozen;
    nodes_.push_back(Node{p.value, {}, nullptr, grad ? &p : nullptr, grad});
    bound_[&p] = nodes_.size() - 1;
    return {this, nodes_.size() - 1};
  }

  Var push(Tensor value, std::initializer_list<Var> parents, Backward backward) {
    bool grad = false;
    if (record_) {
      for (const Var& v : parents) grad = grad || nodes_[v.id()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, grad ? std::move(backward) : nullptr, nullptr, grad});
    return {this, nodes_.size() - 1};
  }

  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Gradient buffer for node id, allocated on first use. Returns nullptr when
  // the node does not participate in differentiation.
  double* grad_of(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad.data();
  }

  std::size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 for a scalar root and accumulates into every
  // bound parameter's grad.
  void backward(Var root) {
    if (root.tape() != this) throw std::invalid_argument("backward: root belongs to another tape");
    if (nodes_[root.id()].value.size() != 1) {
      throw ShapeError("backward: root must be a scalar, got shape " +
                       shape_str(nodes_[root.id()].value.shape()));
    }
    if (!nodes_[root.id()].requires_grad) return;
    grad_of(root.id())[0] += 1.0;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param) {
        auto& g = n.param->grad.values();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
      }
    }
  }

  Tensor grad(Var v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.empty()) return Tensor(n.value.shape());
    return Tensor(n.value.shape(), n.grad);
  }

 private:
  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Param*, std::size_t> bound_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

namespace detail {

inline void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

inline void require_rank(const char* op, const Var& a, std::size_t rank) {
  if (a.value().rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(a.shape()));
  }
}

template <class Fwd, class Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  Tape& t = *a.tape();
  Tensor out(a.shape());
  const auto& in = a.value().values();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  const std::size_t ia = a.id();
  return t.push(std::move(out), {a}, [ia, deriv](Tape& tp, std::size_t self) {
    double* ga = tp.grad_of(ia);
    if (!ga) return;
    const auto& x = tp.value(ia).values();
    const auto& y = tp.value(self).values();
    const auto& g = tp.node(self).grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * deriv(x[i], y[i]);
  });
}

}  // namespace detail

inline Var add(Var a, Var b) {
  detail::require_same_shape("add", a, b);
  Tensor out = a.value();
  const auto& bv = b.value().values();
  for (std::size_t i = 0; i < bv.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    if (double* ga = t.grad_of(ia)) for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (double* gb = t.grad_of(ib)) for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

inline Var sub(Var a, Var b) {
  detail::require_same_shape("sub", a, b);
  Tensor out = a.value();
  const auto& bv = b.value().values();
  for (std::size_t i = 0; i < bv.size(); ++i) out[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    if (double* ga = t.grad_of(ia)) for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (double* gb = t.grad_of(ib)) for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

// Elementwise product.
inline Var mul(Var a, Var b) {
  detail::require_same_shape("mul", a, b);
  Tensor out = a.value();
  const auto& bv = b.value().values();
  for (std::size_t i = 0; i < bv.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    const auto& av = t.value(ia).values();
    const auto& bv = t.value(ib).values();
    if (double* ga = t.grad_of(ia)) for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    if (double* gb = t.grad_of(ib)) for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
  });
}

// Elementwise quotient.
inline Var div(Var a, Var b) {
  detail::require_same_shape("div", a, b);
  Tensor out = a.value();
  const auto& bv = b.value().values();
  for (std::size_t i = 0; i < bv.size(); ++i) out[i] /= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    const auto& bv = t.value(ib).values();
    const auto& y = t.value(self).values();
    if (double* ga = t.grad_of(ia)) for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
    if (double* gb = t.grad_of(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * y[i] / bv[i];
    }
  });
}

inline Var scale(Var a, double k) {
  return detail::unary(a, [k](double x) { return k * x; }, [k](double, double) { return k; });
}

inline Var add_scalar(Var a, double k) {
  return detail::unary(a, [k](double x) { return x + k; }, [](double, double) { return 1.0; });
}

inline Var tanh(Var a) {
  return detail::unary(a, [](double x) { return std::tanh(x); },
                       [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(Var a) {
  return detail::unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                       [](double, double y) { return y * (1.0 - y); });
}

inline Var exp(Var a) {
  return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(Var a) {
  return detail::unary(a, [](double x) { return std::log(x); },
                       [](double x, double) { return 1.0 / x; });
}

// a: m x n (or length n), bias: length n, broadcast over rows.
inline Var add_bias(Var a, Var bias) {
  detail::require_rank("add_bias", bias, 1);
  const std::size_t n = a.cols();
  if (bias.size() != n) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " vs input " + shape_str(a.shape()));
  }
  Tensor out = a.value();
  const auto& bv = bias.value().values();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t j = 0; j < n; ++j) row[j] += bv[j];
  }
  const std::size_t ia = a.id(), ib = bias.id();
  return a.tape()->push(std::move(out), {a, bias}, [ia, ib, n](Tape& t, std::size_t self) {
    const auto& g = t.node(self).grad;
    if (double* ga = t.grad_of(ia)) for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (double* gb = t.grad_of(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
    }
  });
}

// a: m x k (or length k), b: k x n  ->  m x n (or length n).
inline Var matmul(Var a, Var b) {
  detail::require_rank("matmul", b, 2);
  if (a.value().rank() > 2) throw ShapeError("matmul: left operand rank > 2");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimension mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Tensor out(a.value().rank() == 2 ? Shape{m, n} : Shape{n});
  const double* av = a.value().values().data();
  const double* bv = b.value().values().data();
  double* ov = out.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = ov + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      const double* brow = bv + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const double* g = t.node(self).grad.data();
    const double* av = t.value(ia).values().data();
    const double* bv = t.value(ib).values().data();
    if (double* ga = t.grad_of(ia)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = bv + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (double* gb = t.grad_of(ib)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double x = av[i * k + p];
          if (x == 0.0) continue;
          double* gbrow = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += x * grow[j];
        }
      }
    }
  });
}

// a: m x k, b: n x k  ->  a * b^T, m x n.
inline Var matmul_nt(Var a, Var b) {
  detail::require_rank("matmul_nt", a, 2);
  detail::require_rank("matmul_nt", b, 2);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw ShapeError("matmul_nt: inner dimension mismatch " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + "^T");
  }
  Tensor out(Shape{m, n});
  const double* av = a.value().values().data();
  const double* bv = b.value().values().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += av[i * k + p] * bv[j * k + p];
      out[i * n + j] = acc;
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const double* g = t.node(self).grad.data();
    const double* av = t.value(ia).values().data();
    const double* bv = t.value(ib).values().data();
    double* ga = t.grad_of(ia);
    double* gb = t.grad_of(ib);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double gij = g[i * n + j];
        if (gij == 0.0) continue;
        if (ga) for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv[j * k + p];
        if (gb) for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gij * av[i * k + p];
      }
    }
  });
}

inline Var transpose(Var a) {
  detail::require_rank("transpose", a, 2);
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.value()[i * n + j];
  const std::size_t ia = a.id();
  return a.tape()->push(std::move(out), {a}, [ia, m, n](Tape& t, std::size_t self) {
    double* ga = t.grad_of(ia);
    if (!ga) return;
    const auto& g = t.node(self).grad;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

namespace detail {

// Softmax of a strided slice in place; entries with keep[i] == false are 0.
inline void softmax_slice(const double* in, double* out, std::size_t n, std::size_t stride,
                          const std::vector<bool>* keep) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    if (keep && !(*keep)[i]) continue;
    mx = std::max(mx, in[i * stride]);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (keep && !(*keep)[i]) {
      out[i * stride] = 0.0;
      continue;
    }
    const double e = std::exp(in[i * stride] - mx);
    out[i * stride] = e;
    total += e;
  }
  for (std::size_t i = 0; i < n; ++i) out[i * stride] /= total;
}

// dx_i = y_i * (g_i - sum_j g_j y_j) along a strided slice.
inline void softmax_slice_backward(const double* y, const double* g, double* gx, std::size_t n,
                                   std::size_t stride) {
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) dot += g[i * stride] * y[i * stride];
  for (std::size_t i = 0; i < n; ++i) gx[i * stride] += y[i * stride] * (g[i * stride] - dot);
}

}  // namespace detail

class EmptySupportError : public std::invalid_argument {
 public:
  EmptySupportError() : std::invalid_argument("empty softmax support") {}
};

// Rank-1 softmax. Positions where mask is false are excluded from the
// normalizing sum and come out exactly 0.
inline Var softmax(Var v, const std::vector<bool>* mask = nullptr) {
  detail::require_rank("softmax", v, 1);
  const std::size_t n = v.size();
  if (n == 0) throw EmptySupportError();
  if (mask) {
    if (mask->size() != n) throw ShapeError("softmax: mask length does not match input");
    if (std::none_of(mask->begin(), mask->end(), [](bool b) { return b; })) throw EmptySupportError();
  }
  Tensor out(v.shape());
  detail::softmax_slice(v.value().values().data(), out.values().data(), n, 1, mask);
  const std::size_t iv = v.id();
  return v.tape()->push(std::move(out), {v}, [iv, n](Tape& t, std::size_t self) {
    double* gv = t.grad_of(iv);
    if (!gv) return;
    detail::softmax_slice_backward(t.value(self).values().data(), t.node(self).grad.data(), gv, n, 1);
  });
}

// Softmax over each row of a matrix.
inline Var softmax_rows(Var m) {
  detail::require_rank("softmax_rows", m, 2);
  const std::size_t r = m.rows(), c = m.cols();
  if (c == 0) throw EmptySupportError();
  Tensor out(m.shape());
  for (std::size_t i = 0; i < r; ++i) {
    detail::softmax_slice(m.value().values().data() + i * c, out.values().data() + i * c, c, 1, nullptr);
  }
  const std::size_t im = m.id();
  return m.tape()->push(std::move(out), {m}, [im, r, c](Tape& t, std::size_t self) {
    double* gm = t.grad_of(im);
    if (!gm) return;
    const double* y = t.value(self).values().data();
    const double* g = t.node(self).grad.data();
    for (std::size_t i = 0; i < r; ++i) detail::softmax_slice_backward(y + i * c, g + i * c, gm + i * c, c, 1);
  });
}

// Softmax down each column of a matrix.
inline Var softmax_cols(Var m) {
  detail::require_rank("softmax_cols", m, 2);
  const std::size_t r = m.rows(), c = m.cols();
  if (r == 0) throw EmptySupportError();
  Tensor out(m.shape());
  for (std::size_t j = 0; j < c; ++j) {
    detail::softmax_slice(m.value().values().data() + j, out.values().data() + j, r, c, nullptr);
  }
  const std::size_t im = m.id();
  return m.tape()->push(std::move(out), {m}, [im, r, c](Tape& t, std::size_t self) {
    double* gm = t.grad_of(im);
    if (!gm) return;
    const double* y = t.value(self).values().data();
    const double* g = t.node(self).grad.data();
    for (std::size_t j = 0; j < c; ++j) detail::softmax_slice_backward(y + j, g + j, gm + j, r, c);
  });
}

// Selects rows of a matrix; indices may repeat.
inline Var gather_rows(Var m, std::vector<std::size_t> idx) {
  detail::require_rank("gather_rows", m, 2);
  const std::size_t c = m.cols();
  Tensor out(Shape{idx.size(), c});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= m.rows()) throw ShapeError("gather_rows: row index out of range");
    std::copy_n(m.value().values().data() + idx[i] * c, c, out.values().data() + i * c);
  }
  const std::size_t im = m.id();
  return m.tape()->push(std::move(out), {m}, [im, c, idx = std::move(idx)](Tape& t, std::size_t self) {
    double* gm = t.grad_of(im);
    if (!gm) return;
    const double* g = t.node(self).grad.data();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) gm[idx[i] * c + j] += g[i * c + j];
  });
}

// Row i of a matrix as a rank-1 Var.
inline Var row(Var m, std::size_t i) {
  detail::require_rank("row", m, 2);
  const std::size_t c = m.cols();
  if (i >= m.rows()) throw ShapeError("row: index out of range");
  std::vector<double> vals(m.value().values().begin() + static_cast<std::ptrdiff_t>(i * c),
                           m.value().values().begin() + static_cast<std::ptrdiff_t>((i + 1) * c));
  const std::size_t im = m.id();
  return m.tape()->push(Tensor::vector(std::move(vals)), {m}, [im, i, c](Tape& t, std::size_t self) {
    double* gm = t.grad_of(im);
    if (!gm) return;
    const auto& g = t.node(self).grad;
    for (std::size_t j = 0; j < c; ++j) gm[i * c + j] += g[j];
  });
}

// Stacks equal-length rank-1 Vars into a matrix.
inline Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  Tape& t = *rows.front().tape();
  const std::size_t c = rows.front().size();
  Tensor out(Shape{rows.size(), c});
  std::vector<std::size_t> ids;
  ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != c) throw ShapeError("stack_rows: ragged rows");
    std::copy_n(rows[i].value().values().data(), c, out.values().data() + i * c);
    ids.push_back(rows[i].id());
  }
  // push() takes a fixed parent list; route requires_grad through the first
  // parent that needs it.
  Var anchor = rows.front();
  for (const Var& r : rows) {
    if (t.requires_grad(r.id())) {
      anchor = r;
      break;
    }
  }
  return t.push(std::move(out), {anchor}, [c, ids = std::move(ids)](Tape& tp, std::size_t self) {
    const double* g = tp.node(self).grad.data();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      double* gr = tp.grad_of(ids[i]);
      if (!gr) continue;
      for (std::size_t j = 0; j < c; ++j) gr[j] += g[i * c + j];
    }
  });
}

// Concatenates scalars and rank-1 Vars into one rank-1 Var.
inline Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat: no parts");
  Tape& t = *parts.front().tape();
  std::vector<double> vals;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;  // node id, offset
  Var anchor = parts.front();
  bool found = false;
  for (const Var& p : parts) {
    if (p.value().rank() > 1) throw ShapeError("concat: parts must be rank 0 or 1");
    ranges.emplace_back(p.id(), vals.size());
    vals.insert(vals.end(), p.value().values().begin(), p.value().values().end());
    if (!found && t.requires_grad(p.id())) {
      anchor = p;
      found = true;
    }
  }
  return t.push(Tensor::vector(std::move(vals)), {anchor}, [ranges = std::move(ranges)](Tape& tp, std::size_t self) {
    const double* g = tp.node(self).grad.data();
    for (const auto& [id, off] : ranges) {
      double* gp = tp.grad_of(id);
      if (!gp) continue;
      const std::size_t n = tp.value(id).size();
      for (std::size_t j = 0; j < n; ++j) gp[j] += g[off + j];
    }
  });
}

// Column-wise concatenation of two matrices with equal row counts.
inline Var hcat(Var a, Var b) {
  detail::require_rank("hcat", a, 2);
  detail::require_rank("hcat", b, 2);
  const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
  if (b.rows() != r) throw ShapeError("hcat: row counts differ");
  Tensor out(Shape{r, ca + cb});
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(a.value().values().data() + i * ca, ca, out.values().data() + i * (ca + cb));
    std::copy_n(b.value().values().data() + i * cb, cb, out.values().data() + i * (ca + cb) + ca);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->push(std::move(out), {a, b}, [ia, ib, r, ca, cb](Tape& t, std::size_t self) {
    const double* g = t.node(self).grad.data();
    double* ga = t.grad_of(ia);
    double* gb = t.grad_of(ib);
    for (std::size_t i = 0; i < r; ++i) {
      if (ga) for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * (ca + cb) + j];
      if (gb) for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += g[i * (ca + cb) + ca + j];
    }
  });
}

// Multiplies row i by keep[i] (a constant, typically 0 or 1).
inline Var mask_rows(Var m, std::vector<double> keep) {
  detail::require_rank("mask_rows", m, 2);
  const std::size_t r = m.rows(), c = m.cols();
  if (keep.size() != r) throw ShapeError("mask_rows: mask length does not match rows");
  Tensor out = m.value();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= keep[i];
  const std::size_t im = m.id();
  return m.tape()->push(std::move(out), {m}, [im, c, keep = std::move(keep)](Tape& t, std::size_t self) {
    double* gm = t.grad_of(im);
    if (!gm) return;
    const double* g = t.node(self).grad.data();
    for (std::size_t i = 0; i < keep.size(); ++i) {
      if (keep[i] == 0.0) continue;
      for (std::size_t j = 0; j < c; ++j) gm[i * c + j] += keep[i] * g[i * c + j];
    }
  });
}

// Mean over rows: m x n -> length n.
inline Var mean_rows(Var m) {
  detail::require_rank("mean_rows", m, 2);
  const std::size_t r = m.rows(), c = m.cols();
  if (r == 0) throw ShapeError("mean_rows: no rows");
  Tensor out(Shape{c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += m.value()[i * c + j];
  for (std::size_t j = 0; j < c; ++j) out[j] /= static_cast<double>(r);
  const std::size_t im = m.id();
  return m.tape()->push(std::move(out), {m}, [im, r, c](Tape& t, std::size_t self) {
    double* gm = t.grad_of(im);
    if (!gm) return;
    const double* g = t.node(self).grad.data();
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gm[i * c + j] += g[j] * inv;
  });
}

// m: r x c, v: length c -> length r.
inline Var matvec(Var m, Var v) {
  detail::require_rank("matvec", m, 2);
  detail::require_rank("matvec", v, 1);
  const std::size_t r = m.rows(), c = m.cols();
  if (v.size() != c) throw ShapeError("matvec: " + shape_str(m.shape()) + " x " + shape_str(v.shape()));
  Tensor out(Shape{r});
  const double* mv = m.value().values().data();
  const double* vv = v.value().values().data();
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += mv[i * c + j] * vv[j];
    out[i] = acc;
  }
  const std::size_t im = m.id(), iv = v.id();
  return m.tape()->push(std::move(out), {m, v}, [im, iv, r, c](Tape& t, std::size_t self) {
    const double* g = t.node(self).grad.data();
    const double* mv = t.value(im).values().data();
    const double* vv = t.value(iv).values().data();
    if (double* gm = t.grad_of(im)) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gm[i * c + j] += g[i] * vv[j];
    }
    if (double* gv = t.grad_of(iv)) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gv[j] += g[i] * mv[i * c + j];
    }
  });
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().values()) s += x;
  const std::size_t ia = a.id();
  return a.tape()->push(Tensor::scalar(s), {a}, [ia](Tape& t, std::size_t self) {
    double* ga = t.grad_of(ia);
    if (!ga) return;
    const double g = t.node(self).grad[0];
    const std::size_t n = t.value(ia).size();
    for (std::size_t i = 0; i < n; ++i) ga[i] += g;
  });
}

// Maximum element; the gradient flows to the first maximizer.
inline Var max(Var a) {
  const auto& v = a.value().values();
  if (v.empty()) throw ShapeError("max: empty input");
  const std::size_t arg = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  const std::size_t ia = a.id();
  return a.tape()->push(Tensor::scalar(v[arg]), {a}, [ia, arg](Tape& t, std::size_t self) {
    if (double* ga = t.grad_of(ia)) ga[arg] += t.node(self).grad[0];
  });
}

inline Var dot(Var a, Var b) {
  detail::require_same_shape("dot", a, b);
  return sum(mul(a, b));
}

// Element i as a scalar.
inline Var pick(Var a, std::size_t i) {
  if (i >= a.size()) throw ShapeError("pick: index out of range");
  const std::size_t ia = a.id();
  return a.tape()->push(Tensor::scalar(a.value()[i]), {a}, [ia, i](Tape& t, std::size_t self) {
    if (double* ga = t.grad_of(ia)) ga[i] += t.node(self).grad[0];
  });
}

// Elements at idx (repeats allowed) as a rank-1 Var.
inline Var gather(Var a, std::vector<std::size_t> idx) {
  std::vector<double> vals;
  vals.reserve(idx.size());
  for (std::size_t i : idx) {
    if (i >= a.size()) throw ShapeError("gather: index out of range");
    vals.push_back(a.value()[i]);
  }
  const std::size_t ia = a.id();
  return a.tape()->push(Tensor::vector(std::move(vals)), {a}, [ia, idx = std::move(idx)](Tape& t, std::size_t self) {
    double* ga = t.grad_of(ia);
    if (!ga) return;
    const auto& g = t.node(self).grad;
    for (std::size_t k = 0; k < idx.size(); ++k) ga[idx[k]] += g[k];
  });
}

// Reshapes to rank-1 without copying semantics beyond the value buffer.
inline Var flatten(Var a) {
  const std::size_t ia = a.id();
  return a.tape()->push(Tensor::vector(a.value().values()), {a}, [ia](Tape& t, std::size_t self) {
    double* ga = t.grad_of(ia);
    if (!ga) return;
    const auto& g = t.node(self).grad;
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

}  // namespace aoa
