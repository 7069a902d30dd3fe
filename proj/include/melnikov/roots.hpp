#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <utility>

namespace melnikov {

struct RootOptions {
  double xtol = 0.0;
  double ftol = 1e-10;
  int max_iter = 60;
};

struct RootResult {
  double x = 0.0;
  double fx = 0.0;
  double a = 0.0;  // final bracket
  double b = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Bracketed root polish: bisection refined by secant (Illinois) steps.
/// Requires fa and fb of opposite sign (or one of them zero).
template <class F>
RootResult polish_root(F&& f, double a, double b, double fa, double fb, RootOptions opt = {}) {
  RootResult r;
  if (fa == 0.0) return {a, 0.0, a, a, 0, true};
  if (fb == 0.0) return {b, 0.0, b, b, 0, true};
  int side = 0;
  double x = a, fx = fa;
  for (int it = 1; it <= opt.max_iter; ++it) {
    r.iterations = it;
    double xs = (a * fb - b * fa) / (fb - fa);
    const double lo = std::min(a, b), hi = std::max(a, b);
    // Every third step is a plain bisection so the bracket always shrinks.
    if (!(xs > lo && xs < hi) || it % 3 == 0) xs = 0.5 * (a + b);
    x = xs;
    fx = f(x);
    if (fx == 0.0) {
      a = b = x;
      fa = fb = 0.0;
      break;
    }
    if ((fx > 0.0) == (fb > 0.0)) {
      b = x;
      fb = fx;
      if (side == -1) fa *= 0.5;
      side = -1;
    } else {
      a = x;
      fa = fx;
      if (side == +1) fb *= 0.5;
      side = +1;
    }
    const double width = std::abs(b - a);
    const double floor = 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(a), std::abs(b));
    if ((std::abs(fx) <= opt.ftol && width <= std::max(opt.xtol, floor)) || width <= floor) break;
    if (std::abs(fx) <= opt.ftol && opt.xtol == 0.0) break;
  }
  r.x = x;
  r.fx = fx;
  r.a = std::min(a, b);
  r.b = std::max(a, b);
  r.converged = std::abs(fx) <= opt.ftol || std::abs(b - a) <= std::max(opt.xtol, 0.0);
  return r;
}

}  // namespace melnikov
