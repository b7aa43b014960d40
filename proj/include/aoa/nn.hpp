#pragma once

// Neural building blocks shared by the readers: masked softmax, GRU, and a
// one-hidden-layer tanh MLP. Each op has a Var form for training and a Tensor
// form for plain evaluation.

#include <string>
#include <vector>

#include "aoa/autodiff.hpp"

namespace aoa {

inline Tensor softmax(const Tensor& v, const std::vector<bool>* mask = nullptr) {
  Tape tape(false);
  return softmax(tape.constant(v), mask).value();
}

// One GRU direction:
//   z = sigmoid(x W_z + h U_z + b_z)
//   r = sigmoid(x W_r + h U_r + b_r)
//   n = tanh(x W_n + (r * h) U_n + b_n)
//   h' = (1 - z) * n + z * h
struct GruParams {
  Param* w_z = nullptr;
  Param* w_r = nullptr;
  Param* w_n = nullptr;
  Param* u_z = nullptr;
  Param* u_r = nullptr;
  Param* u_n = nullptr;
  Param* b_z = nullptr;
  Param* b_r = nullptr;
  Param* b_n = nullptr;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;

  static GruParams create(ParamStore& store, const std::string& prefix, std::size_t input_dim,
                          std::size_t hidden_dim, const std::string& group, Rng& rng) {
    GruParams g;
    g.input_dim = input_dim;
    g.hidden_dim = hidden_dim;
    auto mat = [&](const char* name, std::size_t rows) {
      Param& p = store.add(prefix + "." + name, {rows, hidden_dim}, group);
      init_uniform(p, rows, rng);
      return &p;
    };
    auto vec = [&](const char* name) {
      Param& p = store.add(prefix + "." + name, {hidden_dim}, group);
      init_uniform(p, input_dim, rng);
      return &p;
    };
    g.w_z = mat("w_z", input_dim);
    g.w_r = mat("w_r", input_dim);
    g.w_n = mat("w_n", input_dim);
    g.u_z = mat("u_z", hidden_dim);
    g.u_r = mat("u_r", hidden_dim);
    g.u_n = mat("u_n", hidden_dim);
    g.b_z = vec("b_z");
    g.b_r = vec("b_r");
    g.b_n = vec("b_n");
    return g;
  }

  static GruParams bind(ParamStore& store, const std::string& prefix) {
    GruParams g;
    g.w_z = &store.at(prefix + ".w_z");
    g.w_r = &store.at(prefix + ".w_r");
    g.w_n = &store.at(prefix + ".w_n");
    g.u_z = &store.at(prefix + ".u_z");
    g.u_r = &store.at(prefix + ".u_r");
    g.u_n = &store.at(prefix + ".u_n");
    g.b_z = &store.at(prefix + ".b_z");
    g.b_r = &store.at(prefix + ".b_r");
    g.b_n = &store.at(prefix + ".b_n");
    g.input_dim = g.w_z->value.rows();
    g.hidden_dim = g.w_z->value.cols();
    g.validate();
    return g;
  }

  void validate() const {
    const std::size_t d = hidden_dim, din = input_dim;
    auto check = [](const Param* p, Shape want) {
      if (!p || p->value.shape() != want) {
        throw ShapeError("gru: parameter " + (p ? p->name : std::string("<null>")) + " has shape " +
                         (p ? shape_str(p->value.shape()) : std::string("?")) + ", want " + shape_str(want));
      }
    };
    check(w_z, {din, d});
    check(w_r, {din, d});
    check(w_n, {din, d});
    check(u_z, {d, d});
    check(u_r, {d, d});
    check(u_n, {d, d});
    check(b_z, {d});
    check(b_r, {d});
    check(b_n, {d});
  }
};

// Runs one GRU direction over the rows of inputs (seq_len x d_in) starting
// from a zero state. Row t of the output is the state after consuming input t;
// when reversed, inputs are consumed last-to-first and the output stays
// aligned with input positions.
inline Var gru_sequence(Tape& tape, Var inputs, const GruParams& p, bool reversed) {
  if (inputs.value().rank() != 2 || inputs.cols() != p.input_dim) {
    throw ShapeError("gru_sequence: inputs " + shape_str(inputs.shape()) + " do not match input_dim " +
                     std::to_string(p.input_dim));
  }
  const std::size_t len = inputs.rows();
  if (len == 0) throw ShapeError("gru_sequence: empty sequence");

  // Input projections for all steps at once.
  Var xz = add_bias(matmul(inputs, tape.input(*p.w_z)), tape.input(*p.b_z));
  Var xr = add_bias(matmul(inputs, tape.input(*p.w_r)), tape.input(*p.b_r));
  Var xn = add_bias(matmul(inputs, tape.input(*p.w_n)), tape.input(*p.b_n));
  Var uz = tape.input(*p.u_z);
  Var ur = tape.input(*p.u_r);
  Var un = tape.input(*p.u_n);

  std::vector<Var> states(len);
  Var h = tape.constant(Tensor(Shape{p.hidden_dim}));
  for (std::size_t step = 0; step < len; ++step) {
    const std::size_t t = reversed ? len - 1 - step : step;
    Var z = sigmoid(add(row(xz, t), matmul(h, uz)));
    Var r = sigmoid(add(row(xr, t), matmul(h, ur)));
    Var n = tanh(add(row(xn, t), matmul(mul(r, h), un)));
    h = add(n, mul(z, sub(h, n)));
    states[t] = h;
  }
  return stack_rows(states);
}

inline Tensor gru_sequence(const Tensor& inputs, const GruParams& p, bool reversed) {
  Tape tape(false);
  return gru_sequence(tape, tape.constant(inputs), p, reversed).value();
}

// out = W2 * tanh(W1 * x + b1) + b2, stored as x W1 with W1: in x hidden.
struct MlpParams {
  Param* w1 = nullptr;
  Param* b1 = nullptr;
  Param* w2 = nullptr;
  Param* b2 = nullptr;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;

  static MlpParams create(ParamStore& store, const std::string& prefix, std::size_t input_dim,
                          std::size_t hidden_dim, std::size_t output_dim, const std::string& group,
                          Rng& rng) {
    MlpParams m;
    m.input_dim = input_dim;
    m.hidden_dim = hidden_dim;
    m.output_dim = output_dim;
    m.w1 = &store.add(prefix + ".w1", {input_dim, hidden_dim}, group);
    m.b1 = &store.add(prefix + ".b1", {hidden_dim}, group);
    m.w2 = &store.add(prefix + ".w2", {hidden_dim, output_dim}, group);
    m.b2 = &store.add(prefix + ".b2", {output_dim}, group);
    init_uniform(*m.w1, input_dim, rng);
    init_uniform(*m.b1, input_dim, rng);
    init_uniform(*m.w2, hidden_dim, rng);
    init_uniform(*m.b2, hidden_dim, rng);
    return m;
  }

  static MlpParams bind(ParamStore& store, const std::string& prefix) {
    MlpParams m;
    m.w1 = &store.at(prefix + ".w1");
    m.b1 = &store.at(prefix + ".b1");
    m.w2 = &store.at(prefix + ".w2");
    m.b2 = &store.at(prefix + ".b2");
    m.input_dim = m.w1->value.rows();
    m.hidden_dim = m.w1->value.cols();
    m.output_dim = m.w2->value.cols();
    if (m.b1->value.shape() != Shape{m.hidden_dim} || m.w2->value.rows() != m.hidden_dim ||
        m.b2->value.shape() != Shape{m.output_dim}) {
      throw ShapeError("mlp: inconsistent layer shapes under " + prefix);
    }
    return m;
  }
};

inline Var mlp_forward(Tape& tape, Var x, const MlpParams& p) {
  if (x.value().rank() != 1 || x.size() != p.input_dim) {
    throw ShapeError("mlp_forward: input " + shape_str(x.shape()) + " does not match input_dim " +
                     std::to_string(p.input_dim));
  }
  Var hidden = tanh(add_bias(matmul(x, tape.input(*p.w1)), tape.input(*p.b1)));
  return add_bias(matmul(hidden, tape.input(*p.w2)), tape.input(*p.b2));
}

// Same MLP applied to every row of an m x input_dim matrix.
inline Var mlp_forward_rows(Tape& tape, Var x, const MlpParams& p) {
  if (x.value().rank() != 2 || x.cols() != p.input_dim) {
    throw ShapeError("mlp_forward_rows: input " + shape_str(x.shape()) + " does not match input_dim " +
                     std::to_string(p.input_dim));
  }
  Var hidden = tanh(add_bias(matmul(x, tape.input(*p.w1)), tape.input(*p.b1)));
  return add_bias(matmul(hidden, tape.input(*p.w2)), tape.input(*p.b2));
}

inline Tensor mlp_forward(const Tensor& x, const MlpParams& p) {
  Tape tape(false);
  return mlp_forward(tape, tape.constant(x), p).value();
}

}  // namespace aoa
