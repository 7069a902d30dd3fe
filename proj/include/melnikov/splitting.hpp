#pragma once

#include "melnikov/common.hpp"
#include "melnikov/fields.hpp"
#include "melnikov/hamcore.hpp"
#include "melnikov/melnikov.hpp"
#include "melnikov/models.hpp"
#include "melnikov/odeint.hpp"
#include "melnikov/roots.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace melnikov {

struct ContinuationOptions {
  double eps_max = 1e-2;
  Tolerance tol{1e-14, 1e-14};
  double newton_tol = 1e-13;
  int max_newton = 30;
  double fd_step = 1e-6;
};

struct PerturbedPeriodicOrbit {
  double eps = 0.0;
  PhasePoint anchor;
  double period = 0.0;
  Eigen::VectorXcd multipliers;
  double energy = 0.0;  // H_eps at the anchor
  double h0 = 0.0;
  double return_residual = 0.0;
  double energy_residual = 0.0;
  double unstable_multiplier = 0.0;
  double stable_multiplier = 0.0;
  Vec unstable_vector;
  Vec stable_vector;
  VectorField field;
};

enum class ManifoldSide { stable, unstable };

struct SplittingReport {
  PhasePoint z0;
  double phase = 0.0;
  std::vector<double> eps;
  std::vector<double> delta_f_over_eps;
  std::vector<double> energy_residuals;  // worst |H_eps - h0| over both leaves
  double prediction = 0.0;
  double prediction_error = 0.0;
  double order = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline IntegrateOptions tight(const Tolerance& tol, bool dense = false) {
  IntegrateOptions io;
  io.tol = tol;
  io.dense = dense;
  return io;
}

/// Index of the coordinate fixed by the section.
inline Eigen::Index section_coord(const SplittingSetup& s, Eigen::Index dim) {
  for (Eigen::Index i = 0; i < dim; ++i) {
    if (i != s.planar[0] && i != s.planar[1] && i != s.energy_coord) return i;
  }
  fail(ErrorKind::invalid_argument, "splitting setup leaves no section coordinate");
}

/// Moves coordinate k until H_eps = h0 (scalar Newton, numerical slope).
inline Vec solve_energy(const SystemDef& sys, double eps, double h0, Vec x, Eigen::Index k) {
  for (int it = 0; it < 50; ++it) {
    const double r = sys.perturbed_energy(x, eps) - h0;
    if (std::abs(r) <= 1e-15 * std::max(1.0, std::abs(h0))) return x;
    const double hk = 1e-7 * std::max(1.0, std::abs(x[k]));
    Vec a = x, b = x;
    a[k] += hk;
    b[k] -= hk;
    const double d = (sys.perturbed_energy(a, eps) - sys.perturbed_energy(b, eps)) / (2.0 * hk);
    if (d == 0.0) break;
    const double step = r / d;
    x[k] -= step;
    if (std::abs(step) <= 1e-16 * std::max(1.0, std::abs(x[k]))) return x;
  }
  if (std::abs(sys.perturbed_energy(x, eps) - h0) > 1e-12) fail(ErrorKind::no_convergence, "energy solve diverged");
  return x;
}

/// Gradient-direction correction onto H_eps = h0.
inline Vec project_energy(const SystemDef& sys, double eps, double h0, Vec x) {
  for (int it = 0; it < 4; ++it) {
    const double r = sys.perturbed_energy(x, eps) - h0;
    Vec g = sys.H0.gradient(x);
    if (sys.H1) g += eps * sys.H1->gradient(x);
    const double n2 = g.squaredNorm();
    if (n2 == 0.0) break;
    x -= (r / n2) * g;
  }
  return x;
}

/// First section crossing in the window (tmin, tmax).
inline EventHit first_return(const VectorField& f, const Vec& x0, const EventSpec& section, double tmin, double tmax,
                             const Tolerance& tol) {
  IntegrateOptions io = tight(tol);
  io.events = {{section.fn, section.direction, false}};
  const Trajectory tr = integrate(f, x0, 0.0, tmax, io);
  for (const auto& h : tr.events()) {
    if (h.t > tmin) return h;
  }
  fail(ErrorKind::no_convergence, "no section return before the time cap");
}

inline double slope_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace detail

/// gamma_eps on (H_eps)^{-1}(h0): Newton on the planar coordinates of the
/// section return map, with the energy coordinate solved at every lift.
inline PerturbedPeriodicOrbit continue_periodic_orbit(const SystemDef& sys, const SplittingSetup& setup, double eps,
                                                      double h0, const Vec& guess, double period_guess,
                                                      const ContinuationOptions& opt = {}) {
  if (std::abs(eps) > opt.eps_max) fail(ErrorKind::invalid_argument, "continue_periodic_orbit: |eps| above eps_max");
  if (!(period_guess > 0.0) || !std::isfinite(period_guess)) {
    fail(ErrorKind::rejected, "continue_periodic_orbit: limit set has no finite period");
  }
  const Eigen::Index n = sys.dimension;
  const Eigen::Index p0 = setup.planar[0], p1 = setup.planar[1], ke = setup.energy_coord;
  const double tmin = 0.5 * period_guess, tmax = 1.5 * period_guess;

  struct Solve {
    Vec base;
    double T = 0.0;
    double resid = 0.0;
  };
  // Newton at one eps starting from the point g.
  auto solve = [&](double e, const Vec& g) {
    const VectorField fe = sys.perturbed(e);
    Vec base = g;
    auto lift = [&](double u0, double u1) {
      Vec x = base;
      x[p0] = u0;
      x[p1] = u1;
      return detail::solve_energy(sys, e, h0, x, ke);
    };
    auto residual = [&](double u0, double u1, double* T) {
      const Vec x = lift(u0, u1);
      const EventHit h = detail::first_return(fe, x, setup.section, tmin, tmax, opt.tol);
      if (T) *T = h.t;
      return make_vec({h.state[p0] - u0, h.state[p1] - u1});
    };
    double u0 = g[p0], u1 = g[p1], T = period_guess;
    Vec r = residual(u0, u1, &T);
    for (int it = 0; it < opt.max_newton && r.norm() > opt.newton_tol; ++it) {
      Mat J(2, 2);
      const double hs = opt.fd_step;
      J.col(0) = (residual(u0 + hs, u1, nullptr) - residual(u0 - hs, u1, nullptr)) / (2.0 * hs);
      J.col(1) = (residual(u0, u1 + hs, nullptr) - residual(u0, u1 - hs, nullptr)) / (2.0 * hs);
      const Vec du = J.fullPivLu().solve(r);
      u0 -= du[0];
      u1 -= du[1];
      base = lift(u0, u1);
      r = residual(u0, u1, &T);
      if (!std::isfinite(r.norm())) fail(ErrorKind::no_convergence, "continue_periodic_orbit: Newton diverged");
    }
    return Solve{lift(u0, u1), T, r.norm()};
  };

  // The return map amplifies guess errors by the unstable multiplier, so
  // larger eps is reached in steps of at most 1e-3 with linear extrapolation.
  const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(eps) / 1e-3 - 1e-9)));
  Solve cur = solve(eps / steps, guess);
  Vec prev = guess;
  for (int k = 2; k <= steps; ++k) {
    const Vec next_guess = k == 2 ? cur.base : (2.0 * cur.base - prev).eval();
    prev = cur.base;
    cur = solve(eps * k / steps, next_guess);
  }
  if (cur.resid > 1e-10) fail(ErrorKind::no_convergence, "continue_periodic_orbit: section return residual above 1e-10");
  const VectorField f = sys.perturbed(eps);
  const Vec a = cur.base;
  const double T = cur.T;

  PerturbedPeriodicOrbit out;
  out.eps = eps;
  out.h0 = h0;
  out.anchor = make_point(sys.chart, a);
  out.anchor.coords = a;  // keep the unreduced lift for integration
  out.period = T;
  out.return_residual = cur.resid;
  out.energy = sys.perturbed_energy(a, eps);
  out.energy_residual = std::abs(out.energy - h0);
  out.field = f;
  if (out.energy_residual > 1e-10) fail(ErrorKind::no_convergence, "continue_periodic_orbit: energy residual above 1e-10");

  // Monodromy of the period-T flow map by central differences.
  Mat Mon(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double hs = opt.fd_step * std::max(1.0, std::abs(a[j]));
    Vec xp = a, xm = a;
    xp[j] += hs;
    xm[j] -= hs;
    const Vec fp = integrate(f, xp, 0.0, T, detail::tight(opt.tol)).final_state();
    const Vec fm = integrate(f, xm, 0.0, T, detail::tight(opt.tol)).final_state();
    Mon.col(j) = (fp - fm) / (2.0 * hs);
  }
  Eigen::EigenSolver<Mat> es(Mon);
  out.multipliers = es.eigenvalues();
  Eigen::Index iu = 0, is = 0;
  for (Eigen::Index i = 1; i < n; ++i) {
    if (std::abs(out.multipliers[i]) > std::abs(out.multipliers[iu])) iu = i;
    if (std::abs(out.multipliers[i]) < std::abs(out.multipliers[is])) is = i;
  }
  const auto mu = out.multipliers[iu], ms = out.multipliers[is];
  if (std::abs(mu.imag()) > 1e-8 * std::abs(mu) || std::abs(std::abs(mu) - 1.0) < 1e-6 ||
      std::abs(std::abs(ms) - 1.0) < 1e-6) {
    fail(ErrorKind::rejected, "continue_periodic_orbit: orbit is not hyperbolic in the transverse directions");
  }
  out.unstable_multiplier = mu.real();
  out.stable_multiplier = ms.real();
  out.unstable_vector = es.eigenvectors().col(iu).real().normalized();
  out.stable_vector = es.eigenvectors().col(is).real().normalized();
  return out;
}

namespace detail {

/// Single shooting over one period multiplies guess errors by exp(lambda T);
/// beyond exp(25) Newton cannot start from an O(eps) guess.
inline double shooting_period(const Model& m, const HomoclinicOrbit& o) {
  if (!m.splitting || o.decay.kind != DecayKind::exponential) {
    fail(ErrorKind::rejected, m.id + ": limit set is not a hyperbolic periodic orbit (parabolic)");
  }
  const double period = o.omega > 0.0 ? kTwoPi / o.omega : std::numeric_limits<double>::infinity();
  if (!std::isfinite(period)) fail(ErrorKind::rejected, m.id + ": limit set has no finite period");
  if (o.decay.rate * period > 25.0) {
    fail(ErrorKind::rejected, m.id + ": lambda * period = " + std::to_string(o.decay.rate * period) +
                                  " is too large for single shooting");
  }
  return period;
}

}  // namespace detail

inline PerturbedPeriodicOrbit continue_periodic_orbit(const Model& m, double eps, const ContinuationOptions& opt = {}) {
  const double period = detail::shooting_period(m, m.family(0.0));
  return continue_periodic_orbit(m.sys, *m.splitting, eps, m.h0, m.splitting->anchor_guess, period, opt);
}

/// Transversal through z0 spanned by grad F and grad H0.
inline Transversal default_transversal(const SystemDef& sys, const Vec& z0) {
  Transversal tr;
  tr.base_point = {z0, sys.chart.id};
  tr.directions = Mat(z0.size(), 2);
  tr.directions.col(0) = sys.F.gradient(z0);
  tr.directions.col(1) = sys.H0.gradient(z0);
  return tr;
}

struct LeafOptions {
  double delta = 1e-8;
  int seeds = 24;          // samples of the fundamental domain
  double radius = 0.25;    // crossings farther than this from z0 are ignored
  double time_cap = 200.0;
  Tolerance tol{1e-14, 1e-14};
};

/// zeta^sigma: the crossing of W^sigma(gamma_eps) with the transversal
/// nearest z0. `tangents` are the two tangent directions of the unperturbed
/// homoclinic manifold at z0 (flow direction first).
inline PhasePoint manifold_leaf(const SystemDef& sys, const PerturbedPeriodicOrbit& orbit, ManifoldSide side,
                                const Transversal& tr, const Mat& tangents, const LeafOptions& opt = {}) {
  if (!(opt.delta >= 1e-9 && opt.delta <= 1e-4)) fail(ErrorKind::invalid_argument, "manifold_leaf: delta outside [1e-9, 1e-4]");
  const Vec z0 = tr.base_point.coords;
  const Mat Q = tr.normals();
  if (Q.cols() != 2) fail(ErrorKind::invalid_argument, "manifold_leaf: transversal must be a 2-plane in 4 dimensions");
  // n1 follows the flow direction inside the normal space, n2 completes it.
  Vec n1 = Q * (Q.transpose() * tangents.col(0));
  if (n1.norm() < 1e-12) fail(ErrorKind::rejected, "manifold_leaf: flow is tangent to the transversal");
  n1.normalize();
  Vec n2 = Q * (Q.transpose() * tangents.col(1));
  n2 -= n2.dot(n1) * n1;
  if (n2.norm() < 1e-12) fail(ErrorKind::rejected, "manifold_leaf: transversal does not cut the homoclinic manifold");
  n2.normalize();

  const bool unstable = side == ManifoldSide::unstable;
  const Vec v = unstable ? orbit.unstable_vector : orbit.stable_vector;
  const double mult = std::abs(unstable ? orbit.unstable_multiplier : orbit.stable_multiplier);
  const double grow = unstable ? mult : 1.0 / mult;  // growth per period along the flight direction
  const double rate = std::log(grow) / orbit.period;
  const double t_end = std::min(opt.time_cap, std::log(1.0 / opt.delta) / rate + orbit.period + 10.0);
  const double dir = unstable ? 1.0 : -1.0;
  const Vec a = orbit.anchor.coords;

  struct Hit {
    bool ok = false;
    Vec x;
    double c2 = 0.0;
    double dist = std::numeric_limits<double>::infinity();
  };
  auto fly = [&](double sgn, double s) {
    Hit out;
    Vec x = a + sgn * opt.delta * std::pow(grow, s) * v;
    x = detail::project_energy(sys, orbit.eps, orbit.h0, x);
    IntegrateOptions io = detail::tight(opt.tol);
    io.events = {{[&](const Vec& y) { return n1.dot(y - z0); }, 0, false}};
    Trajectory traj;
    try {
      traj = integrate(orbit.field, x, 0.0, dir * t_end, io);
    } catch (const IntegrationError& e) {
      // Escaping branches blow up; crossings found before that still count.
      try {
        traj = integrate(orbit.field, x, 0.0, 0.9 * e.t_last(), io);
      } catch (const IntegrationError&) {
        return out;
      }
    }
    for (const auto& h : traj.events()) {
      const double d = (h.state - z0).norm();
      if (d < out.dist && d < opt.radius) {
        out.ok = true;
        out.dist = d;
        out.x = h.state;
        out.c2 = n2.dot(h.state - z0);
      }
    }
    return out;
  };

  Hit best;
  for (double sgn : {1.0, -1.0}) {
    std::vector<Hit> hs;
    for (int i = 0; i <= opt.seeds; ++i) hs.push_back(fly(sgn, static_cast<double>(i) / opt.seeds));
    for (int i = 0; i < opt.seeds; ++i) {
      const Hit &l = hs[static_cast<std::size_t>(i)], &r = hs[static_cast<std::size_t>(i) + 1];
      if (!l.ok || !r.ok || l.c2 * r.c2 > 0.0) continue;
      Hit cur;
      auto g = [&](double s) {
        cur = fly(sgn, s);
        return cur.ok ? cur.c2 : std::numeric_limits<double>::quiet_NaN();
      };
      const double sa = static_cast<double>(i) / opt.seeds, sb = static_cast<double>(i + 1) / opt.seeds;
      const RootResult rr = polish_root(g, sa, sb, l.c2, r.c2, {1e-15, 1e-15, 100});
      cur = fly(sgn, rr.x);
      if (cur.ok && cur.dist < best.dist) best = cur;
    }
  }
  if (!best.ok) fail(ErrorKind::no_convergence, "manifold_leaf: no crossing of the transversal within the time cap");
  return {best.x, sys.chart.id};
}

/// Tangents of the unperturbed homoclinic manifold at family(phase).state(0):
/// the flow direction and the derivative along the family phase.
inline Mat homoclinic_tangents(const SystemDef& sys, const HomoclinicFamily& family, double phase, double h = 1e-6) {
  const Vec z0 = family(phase).state(0.0);
  Mat T(z0.size(), 2);
  T.col(0) = sys.X0(z0, 0.0);
  T.col(1) = (family(phase + h).state(0.0) - family(phase - h).state(0.0)) / (2.0 * h);
  return T;
}

/// Direct F-separation of the perturbed manifolds at z0 for each eps,
/// compared with the Melnikov prediction.
inline SplittingReport measure_splitting(const Model& m, double phase, const std::vector<double>& eps_list,
                                         const std::optional<Transversal>& transversal = std::nullopt,
                                         const LeafOptions& lopt = {}, const ContinuationOptions& copt = {}) {
  if (eps_list.empty()) fail(ErrorKind::invalid_argument, "measure_splitting: empty eps list");
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (!(eps_list[i] > 0.0)) fail(ErrorKind::invalid_argument, "measure_splitting: eps must be positive");
    if (i > 0 && !(eps_list[i] < eps_list[i - 1])) fail(ErrorKind::invalid_argument, "measure_splitting: eps list must decrease");
  }
  const HomoclinicOrbit o = m.family(phase);
  const Vec z0 = o.state(0.0);
  const Transversal tr = transversal ? *transversal : default_transversal(m.sys, z0);
  const Mat tangents = homoclinic_tangents(m.sys, m.family, phase);
  if (!tr.transverse_to(tangents)) fail(ErrorKind::rejected, "measure_splitting: plane is not transverse to the homoclinic manifold");

  SplittingReport rep;
  rep.z0 = make_point(m.sys.chart, z0);
  rep.phase = phase;
  TruncationPolicy pol;
  const MelnikovEvaluation ev = melnikov_autonomous(o, m.sys, pol, 1e-11);
  rep.prediction = ev.value;
  rep.prediction_error = ev.error;

  const double period = detail::shooting_period(m, o);
  Vec guess = m.splitting->anchor_guess;
  for (double eps : eps_list) {
    const PerturbedPeriodicOrbit po = continue_periodic_orbit(m.sys, *m.splitting, eps, m.h0, guess, period, copt);
    const PhasePoint zu = manifold_leaf(m.sys, po, ManifoldSide::unstable, tr, tangents, lopt);
    const PhasePoint zs = manifold_leaf(m.sys, po, ManifoldSide::stable, tr, tangents, lopt);
    rep.eps.push_back(eps);
    rep.delta_f_over_eps.push_back((m.sys.F(zu.coords) - m.sys.F(zs.coords)) / eps);
    rep.energy_residuals.push_back(std::max(std::abs(m.sys.perturbed_energy(zu.coords, eps) - m.h0),
                                            std::abs(m.sys.perturbed_energy(zs.coords, eps) - m.h0)));
  }
  if (rep.eps.size() >= 2) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < rep.eps.size(); ++i) {
      const double d = std::abs(rep.delta_f_over_eps[i] - rep.prediction);
      if (d > 0.0) {
        lx.push_back(std::log(rep.eps[i]));
        ly.push_back(std::log(d));
      }
    }
    if (lx.size() >= 2) rep.order = detail::slope_fit(lx, ly);
  }
  return rep;
}

}  // namespace melnikov
