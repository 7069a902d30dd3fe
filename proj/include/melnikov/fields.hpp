#pragma once

#include "melnikov/common.hpp"

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace melnikov {

template <class S>
using VecT = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// Autonomous or time-dependent vector field. When `autonomous` is set the
/// evaluator must ignore its time argument.
template <class S>
struct BasicVectorField {
  std::function<VecT<S>(const VecT<S>&, S)> eval;
  bool autonomous = true;

  VecT<S> operator()(const VecT<S>& x, S t = S(0)) const { return eval(x, t); }
  explicit operator bool() const { return static_cast<bool>(eval); }
};

using VectorField = BasicVectorField<double>;

inline VectorField zero_field(Eigen::Index dim) {
  return {[dim](const Vec&, double) { return Vec::Zero(dim).eval(); }, true};
}

/// Central-difference gradient with step 1e-6 * (1 + |x_i|) by default.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double step_scale = 1e-6) {
  Vec g(x.size());
  Vec y = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = step_scale * (1.0 + std::abs(x[i]));
    y[i] = x[i] + h;
    const double fp = f(y);
    y[i] = x[i] - h;
    const double fm = f(y);
    y[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Scalar function with an optional closed-form gradient; a missing gradient
/// is synthesized by central differences.
struct ScalarField {
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> closed_gradient;
  double fd_step_scale = 1e-6;

  double operator()(const Vec& x) const { return value(x); }
  Vec gradient(const Vec& x) const {
    if (closed_gradient) return closed_gradient(x);
    return fd_gradient(value, x, fd_step_scale);
  }
  bool has_closed_gradient() const { return static_cast<bool>(closed_gradient); }
  explicit operator bool() const { return static_cast<bool>(value); }
};

/// Jacobian of a field by central differences.
inline Mat fd_jacobian(const VectorField& f, const Vec& x, double t = 0.0, double step_scale = 1e-7) {
  const Eigen::Index n = x.size();
  Mat J(n, n);
  Vec y = x;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = step_scale * (1.0 + std::abs(x[j]));
    y[j] = x[j] + h;
    const Vec fp = f(y, t);
    y[j] = x[j] - h;
    const Vec fm = f(y, t);
    y[j] = x[j];
    J.col(j) = (fp - fm) / (2.0 * h);
  }
  return J;
}

}  // namespace melnikov
