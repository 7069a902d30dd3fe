#pragma once

#include "melnikov/common.hpp"
#include "melnikov/hamcore.hpp"
#include "melnikov/odeint.hpp"
#include "melnikov/orbits.hpp"
#include "melnikov/roots.hpp"

#include <string>
#include <utility>
#include <vector>

namespace melnikov {

enum class ConvergenceKind { absolute, conditional };
enum class ConvergenceReason { df_vanishes_on_limit, limit_unmoved, decaying_integrand, none };

struct ConvergenceClass {
  ConvergenceKind kind = ConvergenceKind::conditional;
  ConvergenceReason reason = ConvergenceReason::none;

  bool absolute() const { return kind == ConvergenceKind::absolute; }
};

inline const char* to_string(ConvergenceKind k) { return k == ConvergenceKind::absolute ? "absolute" : "conditional"; }

inline const char* to_string(ConvergenceReason r) {
  switch (r) {
    case ConvergenceReason::df_vanishes_on_limit: return "DF-vanishes-on-limit";
    case ConvergenceReason::limit_unmoved: return "limit-unmoved-by-eps";
    case ConvergenceReason::decaying_integrand: return "decaying-integrand";
    case ConvergenceReason::none: return "none";
  }
  return "?";
}

inline double integrand_at(const SystemDef& sys, const HomoclinicOrbit& orbit, double t) {
  return melnikov_integrand(sys, orbit.state(t), t);
}

inline ConvergenceClass classify_convergence(const HomoclinicOrbit& orbit, const SystemDef& sys) {
  double df = orbit.limit.DF_on_limit.size() ? orbit.limit.DF_on_limit.norm() : 0.0;
  if (sys.F && orbit.limit.anchor.size() == sys.dimension && orbit.limit.kind == LimitKind::fixed_point_times_circle) {
    df = std::max(df, sys.F.gradient(orbit.limit.anchor).norm());
  }
  if (df <= 1e-10) return {ConvergenceKind::absolute, ConvergenceReason::df_vanishes_on_limit};
  if (!orbit.limit.moves_with_epsilon) return {ConvergenceKind::absolute, ConvergenceReason::limit_unmoved};
  // Integrand envelope far out on both ends compared with its size near t = 0.
  const double lam = orbit.decay.kind == DecayKind::exponential ? orbit.decay.rate : 1.0;
  const double P = orbit.omega > 0.0 ? kTwoPi / orbit.omega : 1.0;
  double near = 0.0, far = 0.0;
  for (int i = 0; i < 32; ++i) {
    const double u = P * i / 32.0;
    near = std::max(near, std::abs(integrand_at(sys, orbit, u - 0.5 * P)));
    far = std::max({far, std::abs(integrand_at(sys, orbit, 40.0 / lam + u)),
                    std::abs(integrand_at(sys, orbit, -40.0 / lam - u))});
  }
  if (orbit.decay.kind == DecayKind::exponential && far <= 1e-12 * std::max(near, 1.0)) {
    return {ConvergenceKind::absolute, ConvergenceReason::decaying_integrand};
  }
  return {ConvergenceKind::conditional, ConvergenceReason::none};
}

struct TruncationPair {
  double T = 0.0;
  double Tstar = 0.0;
  double residual = 0.0;  // wrapped phase(T) - phase(-Tstar)
  bool fallback = false;  // omega = 0: every pair is matched
};

/// j-th pair with phase(T) = psi + 2 pi n and phase(-T*) = psi - 2 pi n'. The
/// base offsets lie in (-P, 0], so min(T_2j, T*_2j) >= 2 min(T_j, T*_j). With
/// `mismatch`, one endpoint (upper for even j, lower for odd j) is shifted by pi.
inline TruncationPair matched_times(const HomoclinicOrbit& orbit, int j, double psi = 0.5 * kPi, bool mismatch = false) {
  if (j < 1) fail(ErrorKind::invalid_argument, "matched_times: j must be positive");
  const double w = orbit.omega;
  TruncationPair out;
  if (w == 0.0) {
    if (std::abs(wrap_difference(orbit.c_plus - orbit.c_minus)) > 1e-12) {
      fail(ErrorKind::rejected, "matched_times: omega = 0 with unmatched endpoint phases");
    }
    const double unit = 10.0 / (orbit.decay.kind == DecayKind::exponential ? orbit.decay.rate : 1.0);
    out.T = out.Tstar = unit * j;
    out.residual = wrap_difference(orbit.phase(out.T) - orbit.phase(-out.Tstar));
    out.fallback = true;
    return out;
  }
  if (w < 0.0) fail(ErrorKind::invalid_argument, "matched_times: negative phase frequency");
  const double P = kTwoPi / w;
  auto base = [P](double b0) { return b0 - P * std::ceil(b0 / P); };
  const double shift_up = mismatch && j % 2 == 0 ? kPi : 0.0;
  const double shift_dn = mismatch && j % 2 == 1 ? kPi : 0.0;
  const double bu = base((psi + shift_up - orbit.c_plus) / w);
  const double bd = base((orbit.c_minus - psi - shift_dn) / w);
  double T = bu + j * P, Ts = bd + j * P;

  // Refine on the orbit's own phase function: phase(T) hits the asymptotic target.
  auto refine = [&](double guess, double sgn) {
    const double target = sgn > 0 ? w * guess + orbit.c_plus : -w * guess + orbit.c_minus;
    auto f = [&](double s) { return orbit.phase(sgn * s) - target; };
    double a = std::max(0.0, guess - 0.25 * P), b = guess + 0.25 * P;
    double fa = f(a), fb = f(b);
    for (int k = 0; k < 40 && fa * fb > 0.0; ++k) {
      a = std::max(0.0, a - 0.25 * P);
      b += 0.25 * P;
      fa = f(a);
      fb = f(b);
    }
    if (fa * fb > 0.0) fail(ErrorKind::no_convergence, "matched_times: phase target not bracketed");
    return polish_root(f, a, b, fa, fb, {0.0, 1e-13, 100}).x;
  };
  out.T = refine(T, 1.0);
  out.Tstar = refine(Ts, -1.0);
  out.residual = wrap_difference(orbit.phase(out.T) - orbit.phase(-out.Tstar) - shift_up + shift_dn);
  return out;
}

/// `automatic` picks plain truncation for absolute integrals, matched otherwise.
enum class TruncationMode { automatic, plain, matched };

struct TruncationPolicy {
  TruncationMode mode = TruncationMode::automatic;
  double anchor = 0.5 * kPi;
  bool mismatched = false;
  int j_min = 1;
  int j_max = 60;
  bool stop_early = true;
  bool accelerate = true;
};

struct TailAudit {
  double T = 0.0;
  double correction = 0.0;
  double bound = 0.0;
  double decay_power = 0.0;
};

struct MelnikovEvaluation {
  double value = 0.0;
  double error = 0.0;
  double T = 0.0;
  double Tstar = 0.0;
  ConvergenceClass convergence;
  std::vector<std::pair<int, double>> partials;
  bool converged = true;
  bool accelerated = false;
  double quadrature_error = 0.0;
  double tail_bound = 0.0;
  double spread = 0.0;
  TailAudit upper_tail, lower_tail;
  std::vector<std::string> warnings;
};

namespace detail {

/// Integral of f over [a, b] through the odeint quadrature channel.
inline QuadratureRun quad(const std::function<double(double)>& f, double a, double b, double tol) {
  if (a == b) return {};
  // Summed local estimates overstate the error by orders of magnitude on long
  // spans, so the estimate is the change against a run ten times looser.
  auto run = [&](double atol) {
    IntegrateOptions io;
    io.tol = {atol, 1e-14};
    io.dense = false;
    return integrate_with_quadrature(zero_field(0), Vec(0), a, b, [&f](const Vec&, double t) { return f(t); }, io);
  };
  QuadratureRun fine = run(0.002 * tol);
  const QuadratureRun coarse = run(0.02 * tol);
  fine.error = std::min(fine.error, std::abs(fine.value - coarse.value));
  return fine;
}

/// Fourier data of a 2 pi-periodic function sampled on a uniform grid.
struct PeriodicSeries {
  double mean = 0.0;
  std::vector<double> a, b;  // cos and sin coefficients, k = 1..K

  double primitive(double phi) const {
    double s = 0.0;
    for (std::size_t k = 1; k <= a.size(); ++k) {
      s += (a[k - 1] * std::sin(k * phi) - b[k - 1] * std::cos(k * phi)) / static_cast<double>(k);
    }
    return s;
  }
  double max_primitive() const {
    double s = 0.0;
    for (std::size_t k = 1; k <= a.size(); ++k) s += std::hypot(a[k - 1], b[k - 1]) / static_cast<double>(k);
    return s;
  }
};

inline PeriodicSeries fourier(const std::function<double(double)>& G, int n = 64) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = G(kTwoPi * i / n);
  PeriodicSeries s;
  for (double x : v) s.mean += x;
  s.mean /= n;
  for (int k = 1; k < n / 2; ++k) {
    double ak = 0.0, bk = 0.0;
    for (int i = 0; i < n; ++i) {
      const double th = kTwoPi * k * i / n;
      ak += v[static_cast<std::size_t>(i)] * std::cos(th);
      bk += v[static_cast<std::size_t>(i)] * std::sin(th);
    }
    s.a.push_back(2.0 * ak / n);
    s.b.push_back(2.0 * bk / n);
  }
  return s;
}

/// Integrand as a function of (t, phase): the orbit state at t with the
/// phase coordinate replaced.
using PhaseIntegrand = std::function<double(double, double)>;

/// Oscillatory polynomial tail beyond t_end (sign +1) or before -t_end
/// (sign -1): one integration by parts against the zero-mean phase
/// primitive, with the remainder bounded by its envelope integral.
inline TailAudit by_parts_tail(const HomoclinicOrbit& orbit, const PhaseIntegrand& g, double t_end, int sign) {
  TailAudit out;
  out.T = t_end;
  const double t = sign * t_end;
  auto series_at = [&](double tt) { return fourier([&](double phi) { return g(tt, phi); }); };
  auto dphase = [&](double tt) {
    const double h = 1e-3 * std::max(1.0, std::abs(tt));
    return (orbit.phase(tt + h) - orbit.phase(tt - h)) / (2.0 * h);
  };
  const PeriodicSeries S = series_at(t);
  const double w = dphase(t);
  const double Pt = S.primitive(orbit.phase(t));
  // sign +1: int_T^inf g = -P(T)/phi'(T) + R; sign -1: int_-inf^-T g = +P(-T)/phi'(-T) + R.
  out.correction = -sign * Pt / w;

  // Remainder integrand: slow derivative of P over phi' plus P (1/phi')'.
  auto envelope = [&](double tt) {
    const double h = 1e-3 * std::abs(tt);
    const PeriodicSeries Sp = series_at(tt + h), Sm = series_at(tt - h);
    PeriodicSeries D;
    for (std::size_t k = 0; k < Sp.a.size(); ++k) {
      D.a.push_back((Sp.a[k] - Sm.a[k]) / (2.0 * h));
      D.b.push_back((Sp.b[k] - Sm.b[k]) / (2.0 * h));
    }
    const double w0 = dphase(tt);
    const double dinv = (1.0 / dphase(tt + h) - 1.0 / dphase(tt - h)) / (2.0 * h);
    const PeriodicSeries S0 = series_at(tt);
    return D.max_primitive() / std::abs(w0) + S0.max_primitive() * std::abs(dinv) + std::abs(S0.mean);
  };
  const double r1 = envelope(t), r2 = envelope(0.5 * t);
  out.decay_power = std::log2(r2 / r1);
  if (!(out.decay_power > 1.1)) {
    out.bound = std::numeric_limits<double>::infinity();
  } else {
    out.bound = r1 * t_end / (out.decay_power - 1.0);
  }
  return out;
}

inline double exp_envelope(const std::function<double(double)>& f, double t0, double span, double lam, int sign) {
  double C = 0.0;
  for (int i = 0; i <= 48; ++i) {
    const double t = t0 + span * i / 48.0;
    C = std::max(C, std::abs(f(sign * t)) * std::exp(lam * t));
  }
  return C;
}

struct AbsoluteSetup {
  std::function<double(double)> f;  // integrand along the orbit
  PhaseIntegrand f_phase;           // only needed for polynomial decay
};

/// Absolutely convergent improper integral over the whole line.
inline MelnikovEvaluation absolute_integral(const HomoclinicOrbit& orbit, const AbsoluteSetup& s, double tol,
                                           double forcing_period = 0.0) {
  MelnikovEvaluation ev;
  if (orbit.decay.kind == DecayKind::exponential) {
    const double lam = orbit.decay.rate;
    const double span = forcing_period > 0.0 ? forcing_period : orbit.omega > 0.0 ? kTwoPi / orbit.omega : 2.0 / lam;
    const double T0 = std::max(8.0 / lam, std::isfinite(orbit.t_handoff_plus) ? orbit.t_handoff_plus : 0.0);
    const double T0s = std::max(8.0 / lam, std::isfinite(orbit.t_handoff_minus) ? orbit.t_handoff_minus : 0.0);
    auto pick = [&](double t0, int sign, double& bound) {
      const double C = exp_envelope(s.f, t0, span, lam, sign);
      double T = t0;
      if (C > 0.0) T = std::max(t0, std::log(4.0 * C / (lam * tol)) / lam);
      const double C2 = std::max(C, exp_envelope(s.f, T, span, lam, sign));
      bound = C2 * std::exp(-lam * T) / lam;
      return T;
    };
    double bu = 0.0, bd = 0.0;
    ev.T = pick(T0, 1, bu);
    ev.Tstar = pick(T0s, -1, bd);
    ev.tail_bound = bu + bd;
    ev.upper_tail = {ev.T, 0.0, bu, 0.0};
    ev.lower_tail = {ev.Tstar, 0.0, bd, 0.0};
  } else {
    ev.T = orbit.t_handoff_plus;
    ev.Tstar = orbit.t_handoff_minus;
    if (!std::isfinite(ev.T) || !std::isfinite(ev.Tstar)) fail(ErrorKind::invalid_argument, "polynomial decay needs a finite cap");
    ev.upper_tail = by_parts_tail(orbit, s.f_phase, ev.T, 1);
    ev.lower_tail = by_parts_tail(orbit, s.f_phase, ev.Tstar, -1);
    ev.tail_bound = ev.upper_tail.bound + ev.lower_tail.bound;
  }
  const QuadratureRun up = quad(s.f, 0.0, ev.T, tol);
  const QuadratureRun dn = quad(s.f, 0.0, -ev.Tstar, tol);
  ev.value = up.value - dn.value + ev.upper_tail.correction + ev.lower_tail.correction;
  ev.quadrature_error = up.error + dn.error;
  ev.error = ev.quadrature_error + ev.tail_bound;
  ev.converged = ev.tail_bound <= 0.5 * tol || orbit.decay.kind == DecayKind::exponential;
  if (!ev.converged) ev.warnings.push_back("tail bound exceeds tol/2 at the integration cap");
  ev.partials.push_back({0, ev.value});
  return ev;
}

inline Eigen::Index phase_index(const HomoclinicOrbit& orbit) {
  if (orbit.limit.circle_coords.size() != 1) fail(ErrorKind::invalid_argument, "orbit has no single phase coordinate");
  return orbit.limit.circle_coords.front();
}

inline PhaseIntegrand phase_replaced(const HomoclinicOrbit& orbit, std::function<double(const Vec&, double)> g) {
  if (orbit.decay.kind != DecayKind::polynomial) return {};
  const Eigen::Index pi = phase_index(orbit);
  return [&orbit, g = std::move(g), pi](double t, double phi) {
    Vec x = orbit.state(t);
    x[pi] = phi;
    return g(x, t);
  };
}

}  // namespace detail

/// Partial integrals int_{-T*_j}^{T_j} DF.Y along a truncation sequence. With
/// acceleration the asymptotic integrand (its value on the limit orbit at
/// the asymptotic phase) is subtracted on each side and integrated exactly.
inline std::vector<std::pair<int, double>> partial_integrals(const HomoclinicOrbit& orbit, const SystemDef& sys,
                                                             const TruncationPolicy& pol, double tol, bool accelerate,
                                                             double* quad_err = nullptr,
                                                             std::vector<TruncationPair>* pairs = nullptr) {
  const double w = orbit.omega;
  std::function<double(double)> G;
  detail::PeriodicSeries S;
  if (accelerate) {
    const Eigen::Index pi = detail::phase_index(orbit);
    G = [&sys, &orbit, pi](double phi) {
      Vec x = orbit.limit.anchor;
      x[pi] = phi;
      return melnikov_integrand(sys, x, 0.0);
    };
    S = detail::fourier(G);
    double amp = 0.0;
    for (std::size_t k = 0; k < S.a.size(); ++k) amp = std::max(amp, std::hypot(S.a[k], S.b[k]));
    if (std::abs(S.mean) > 1e-10 * std::max(1.0, amp)) {
      fail(ErrorKind::rejected, "integrand has nonzero mean on the limit orbit; the improper integral diverges");
    }
  }
  auto f_up = [&](double t) {
    double v = integrand_at(sys, orbit, t);
    if (accelerate) v -= G(w * t + orbit.c_plus);
    return v;
  };
  auto f_dn = [&](double t) {
    double v = integrand_at(sys, orbit, t);
    if (accelerate) v -= G(w * t + orbit.c_minus);
    return v;
  };
  std::vector<std::pair<int, double>> out;
  double up = 0.0, dn = 0.0, tu = 0.0, td = 0.0, err = 0.0;
  int stable = 0;
  double last = 0.0;
  for (int j = pol.j_min; j <= pol.j_max; ++j) {
    const TruncationPair tp = matched_times(orbit, j, pol.anchor, pol.mismatched);
    if (pairs) pairs->push_back(tp);
    const QuadratureRun a = detail::quad(f_up, tu, tp.T, tol);
    const QuadratureRun b = detail::quad(f_dn, -td, -tp.Tstar, tol);
    up += a.value;
    dn -= b.value;
    err += a.error + b.error;
    tu = tp.T;
    td = tp.Tstar;
    double v = up + dn;
    if (accelerate && w != 0.0) {
      v += (S.primitive(w * tp.T + orbit.c_plus) - S.primitive(orbit.c_plus)) / w;
      v += (S.primitive(orbit.c_minus) - S.primitive(-w * tp.Tstar + orbit.c_minus)) / w;
    }
    out.push_back({j, v});
    if (pol.stop_early && out.size() >= 2) {
      stable = std::abs(v - last) <= tol ? stable + 1 : 0;
      if (stable >= 2) break;
    }
    last = v;
  }
  if (quad_err) *quad_err = err;
  return out;
}

inline double spread_of(const std::vector<std::pair<int, double>>& xs, std::size_t from = 0) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t i = from; i < xs.size(); ++i) {
    lo = std::min(lo, xs[i].second);
    hi = std::max(hi, xs[i].second);
  }
  return xs.size() > from ? hi - lo : 0.0;
}

/// M(z0, h0) as an improper integral of DF.Y along the homoclinic orbit.
inline MelnikovEvaluation melnikov_autonomous(const HomoclinicOrbit& orbit, const SystemDef& sys,
                                              const TruncationPolicy& pol = {}, double tol = 1e-10) {
  const ConvergenceClass cls = classify_convergence(orbit, sys);
  if (!cls.absolute() && pol.mode == TruncationMode::plain) {
    fail(ErrorKind::rejected, "melnikov_autonomous: conditional integral needs matched truncation");
  }
  if (cls.absolute() && pol.mode != TruncationMode::matched) {
    detail::AbsoluteSetup s;
    s.f = [&](double t) { return integrand_at(sys, orbit, t); };
    s.f_phase = detail::phase_replaced(orbit, [&sys](const Vec& x, double t) { return melnikov_integrand(sys, x, t); });
    MelnikovEvaluation ev = detail::absolute_integral(orbit, s, tol);
    ev.convergence = cls;
    return ev;
  }

  MelnikovEvaluation ev;
  ev.convergence = cls;
  if (orbit.omega == 0.0) {
    ev.warnings.push_back("omega = 0: endpoints trivially matched, plain truncation used");
  }
  const bool accel = pol.accelerate && orbit.omega != 0.0 && orbit.limit.circle_coords.size() == 1;
  ev.accelerated = accel;
  std::vector<TruncationPair> pairs;
  ev.partials = partial_integrals(orbit, sys, pol, tol, accel, &ev.quadrature_error, &pairs);
  const auto& P = ev.partials;
  ev.value = P.back().second;
  ev.T = pairs.back().T;
  ev.Tstar = pairs.back().Tstar;
  ev.spread = spread_of(P, P.size() >= 3 ? P.size() - 3 : 0);
  double resid = 0.0;
  for (const auto& tp : pairs) resid = std::max(resid, std::abs(tp.residual));
  // A phase mismatch d moves the matched closed-form term by at most |G|max d / omega.
  double mismatch = 0.0;
  if (orbit.omega != 0.0) mismatch = 2.0 * resid / orbit.omega;
  ev.error = ev.spread + ev.quadrature_error + mismatch;
  ev.converged = P.size() >= 3 && ev.spread <= tol;
  if (!ev.converged) ev.warnings.push_back("matched partials did not settle within tol");
  return ev;
}

/// dM/dphase by differentiating under the integral. Refused unless the
/// integral converges absolutely.
inline MelnikovEvaluation melnikov_derivative(const HomoclinicFamily& family, const SystemDef& sys, double phase,
                                              double tol = 1e-10, double h = 1e-5) {
  const HomoclinicOrbit orbit = family(phase);
  const ConvergenceClass cls = classify_convergence(orbit, sys);
  if (!cls.absolute()) fail(ErrorKind::rejected, "melnikov_derivative: integral is only conditionally convergent");
  detail::AbsoluteSetup s;
  std::function<double(const Vec&, double)> dg;
  if (sys.integrand_phase_derivative) {
    dg = sys.integrand_phase_derivative;
    s.f = [&](double t) { return dg(orbit.state(t), t); };
  } else {
    auto op = std::make_shared<HomoclinicOrbit>(family(phase + h));
    auto om = std::make_shared<HomoclinicOrbit>(family(phase - h));
    s.f = [&sys, op, om, h](double t) {
      return (melnikov_integrand(sys, op->state(t), t) - melnikov_integrand(sys, om->state(t), t)) / (2.0 * h);
    };
    if (orbit.decay.kind == DecayKind::polynomial) {
      const Eigen::Index pi = detail::phase_index(orbit);
      dg = [&sys, pi, h](const Vec& x, double t) {
        Vec a = x, b = x;
        a[pi] += h;
        b[pi] -= h;
        return (melnikov_integrand(sys, a, t) - melnikov_integrand(sys, b, t)) / (2.0 * h);
      };
    }
  }
  if (dg) s.f_phase = detail::phase_replaced(orbit, dg);
  MelnikovEvaluation ev = detail::absolute_integral(orbit, s, tol);
  ev.convergence = cls;
  return ev;
}

enum class PeriodicForm { cross, hamiltonian };

/// Planar periodically forced case: the forcing phase is advanced as t + tau0.
inline MelnikovEvaluation melnikov_periodic(const SystemDef& sys, const HomoclinicOrbit& orbit, double tau0,
                                            PeriodicForm form, double tol = 1e-12) {
  if (sys.dimension != 2 || !sys.forcing_period) fail(ErrorKind::invalid_argument, "melnikov_periodic: planar forced system required");
  if (form == PeriodicForm::cross && !sys.symplectic) {
    fail(ErrorKind::rejected, "melnikov_periodic: cross form needs a symplectic chart");
  }
  double orient = 1.0;
  if (form == PeriodicForm::cross && !sys.pairs.empty() && sys.pairs.front().first == 1) orient = -1.0;
  detail::AbsoluteSetup s;
  s.f = [&, orient](double t) {
    const Vec x = orbit.state(t);
    const Vec y = sys.Y(x, t + tau0);
    if (form == PeriodicForm::hamiltonian) return sys.H0.gradient(x).dot(y);
    const Vec X = sys.X0(x, t + tau0);
    return orient * (X[0] * y[1] - X[1] * y[0]);
  };
  MelnikovEvaluation ev = detail::absolute_integral(orbit, s, tol, *sys.forcing_period);
  ev.convergence = {ConvergenceKind::absolute, ConvergenceReason::df_vanishes_on_limit};
  return ev;
}

}  // namespace melnikov
