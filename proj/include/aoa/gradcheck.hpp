#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "aoa/autodiff.hpp"

namespace aoa {

// Compares reverse-mode gradients against central differences and returns
//   max_i |analytic_i - numeric_i| / max(1, |analytic_i|).
using ScalarFn = std::function<Var(Tape&, Var)>;

namespace detail {

inline void check_eps(double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw std::invalid_argument("grad_check: eps must lie in [1e-7, 1e-3]");
}

inline double eval_scalar(const std::function<Var(Tape&)>& f) {
  Tape tape(false);
  Var out = f(tape);
  if (out.size() != 1) throw ShapeError("grad_check: function must return a scalar");
  const double v = out.item();
  if (!std::isfinite(v)) throw std::domain_error("grad_check: function value is not finite");
  return v;
}

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

}  // namespace detail

inline double grad_check(const ScalarFn& f, const Tensor& x, double eps = 1e-5) {
  detail::check_eps(eps);
  ParamStore store;
  Param& p = store.add("x", x.shape());
  p.value = x;

  Tape tape;
  Var out = f(tape, tape.input(p));
  if (out.size() != 1) throw ShapeError("grad_check: function must return a scalar");
  if (!std::isfinite(out.item())) throw std::domain_error("grad_check: function value is not finite");
  tape.backward(out);
  const Tensor analytic = p.grad;

  auto at = [&](Tape& t) { return f(t, t.input(p)); };
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = p.value[i];
    p.value[i] = orig + eps;
    const double up = detail::eval_scalar(at);
    p.value[i] = orig - eps;
    const double down = detail::eval_scalar(at);
    p.value[i] = orig;
    worst = std::max(worst, detail::rel_error(analytic[i], (up - down) / (2.0 * eps)));
  }
  return worst;
}

// Same comparison over every unfrozen scalar in a parameter store.
inline double grad_check_params(const std::function<Var(Tape&)>& f, ParamStore& store, double eps = 1e-5) {
  detail::check_eps(eps);
  store.zero_grad();
  {
    Tape tape;
    Var out = f(tape);
    if (out.size() != 1) throw ShapeError("grad_check: function must return a scalar");
    if (!std::isfinite(out.item())) throw std::domain_error("grad_check: function value is not finite");
    tape.backward(out);
  }
  double worst = 0.0;
  store.for_each([&](Param& p) {
    if (p.frozen) return;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + eps;
      const double up = detail::eval_scalar(f);
      p.value[i] = orig - eps;
      const double down = detail::eval_scalar(f);
      p.value[i] = orig;
      worst = std::max(worst, detail::rel_error(p.grad[i], (up - down) / (2.0 * eps)));
    }
  });
  store.zero_grad();
  return worst;
}

}  // namespace aoa
