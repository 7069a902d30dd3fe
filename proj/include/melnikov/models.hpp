#pragma once

#include "melnikov/common.hpp"
#include "melnikov/hamcore.hpp"
#include "melnikov/odeint.hpp"
#include "melnikov/orbits.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>

namespace melnikov {

/// How the splitting oracle parameterizes a neighbourhood of gamma_eps: a
/// phase section, two free planar coordinates on it, and one coordinate
/// solved from the energy constraint.
struct SplittingSetup {
  EventSpec section;
  Eigen::Index planar[2] = {0, 1};
  Eigen::Index energy_coord = 2;
  Vec anchor_guess;
};

struct Model {
  std::string id;
  std::map<std::string, double> params;
  SystemDef sys;
  HomoclinicFamily family;
  double h0 = 0.0;
  double family_parameter = 0.0;  // h0, or rho0 for the McGehee chart
  std::optional<SplittingSetup> splitting;
  Vec box_lo, box_hi;  // sampling box for consistency checks
};

namespace detail {

inline ScalarField scalar(std::function<double(const Vec&)> v, std::function<Vec(const Vec&)> g) {
  ScalarField s;
  s.value = std::move(v);
  s.closed_gradient = std::move(g);
  return s;
}

}  // namespace detail

/// Duffing loop in (z1, z2) coupled to a harmonic oscillator in (w1, w2)
/// through H1 = z1 w1.
inline Model make_duffing_oscillator(double alpha, double g0) {
  if (!(alpha > 0.0) || !(g0 > 0.0)) fail(ErrorKind::invalid_argument, "duffing-oscillator: alpha and g0 must be positive");
  Model m;
  m.id = "duffing-oscillator";
  m.params = {{"alpha", alpha}, {"g0", g0}};
  SystemDef& s = m.sys;
  s.dimension = 4;
  s.chart = {"duffing-oscillator", {{"z1", {}}, {"z2", {}}, {"w1", {}}, {"w2", {}}}};
  s.symplectic = true;
  s.pairs = {{0, 1}, {2, 3}};
  s.F = detail::scalar([](const Vec& x) { return x[1] * x[1] / 2 - x[0] * x[0] / 2 + x[0] * x[0] * x[0] / 3; },
                       [](const Vec& x) { return make_vec({-x[0] + x[0] * x[0], x[1], 0.0, 0.0}); });
  s.H0 = detail::scalar(
      [alpha](const Vec& x) {
        return x[1] * x[1] / 2 - x[0] * x[0] / 2 + x[0] * x[0] * x[0] / 3 + alpha / 2 * (x[2] * x[2] + x[3] * x[3]);
      },
      [alpha](const Vec& x) { return make_vec({-x[0] + x[0] * x[0], x[1], alpha * x[2], alpha * x[3]}); });
  s.H1 = detail::scalar([](const Vec& x) { return x[0] * x[2]; },
                        [](const Vec& x) { return make_vec({x[2], 0.0, x[0], 0.0}); });
  s.X0 = {[alpha](const Vec& x, double) { return make_vec({x[1], x[0] - x[0] * x[0], alpha * x[3], -alpha * x[2]}); },
          true};
  s.Y = {[](const Vec& x, double) { return make_vec({0.0, -x[2], 0.0, -x[0]}); }, true};
  m.h0 = g0;
  m.family_parameter = g0;
  m.family = [alpha, g0](double th0) {
    return closed_form_homoclinic("duffing-oscillator", {{"alpha", alpha}, {"g0", g0}, {"theta0", th0}});
  };
  const double A = std::sqrt(2.0 * g0 / alpha);
  SplittingSetup sp;
  sp.section = {[](const Vec& x) { return -x[3]; }, +1, true};
  sp.planar[0] = 0;
  sp.planar[1] = 1;
  sp.energy_coord = 2;
  sp.anchor_guess = make_vec({0.0, 0.0, A, 0.0});
  m.splitting = sp;
  m.box_lo = make_vec({-1.0, -1.0, -2.0, -2.0});
  m.box_hi = make_vec({2.0, 1.0, 2.0, 2.0});
  return m;
}

/// Non-symplectic chart (z1, z2) -> (z1, z2 + z2^3) on the planar Duffing phase plane.
inline ChartMap cubic_shear_chart() {
  ChartMap m;
  m.target = {"duffing-sheared", {{"u1", {}}, {"u2", {}}}};
  m.forward = [](const Vec& x) { return make_vec({x[0], x[1] + x[1] * x[1] * x[1]}); };
  m.inverse = [](const Vec& u) {
    // Real root of v^3 + v - u2 (Cardano), then Newton against cancellation.
    const double c = u[1];
    const double r = std::sqrt(c * c / 4.0 + 1.0 / 27.0);
    double v = std::cbrt(c / 2.0 + r) + std::cbrt(c / 2.0 - r);
    for (int i = 0; i < 3; ++i) v -= (v * v * v + v - c) / (3.0 * v * v + 1.0);
    return make_vec({u[0], v});
  };
  m.jacobian = [](const Vec& x) {
    Mat J = Mat::Identity(2, 2);
    J(1, 1) = 1.0 + 3.0 * x[1] * x[1];
    return J;
  };
  return m;
}

/// Planar Duffing system z2^2/2 - z1^2/2 + z1^3/3 forced by Y = (0, cos t).
inline Model make_forced_duffing() {
  Model m;
  m.id = "duffing-forced";
  SystemDef& s = m.sys;
  s.dimension = 2;
  s.chart = {"duffing-planar", {{"z1", {}}, {"z2", {}}}};
  s.symplectic = true;
  s.pairs = {{0, 1}};
  s.forcing_period = kTwoPi;
  s.H0 = detail::scalar([](const Vec& x) { return x[1] * x[1] / 2 - x[0] * x[0] / 2 + x[0] * x[0] * x[0] / 3; },
                        [](const Vec& x) { return make_vec({-x[0] + x[0] * x[0], x[1]}); });
  s.F = s.H0;
  s.X0 = {[](const Vec& x, double) { return make_vec({x[1], x[0] - x[0] * x[0]}); }, true};
  s.Y = {[](const Vec&, double t) { return make_vec({0.0, std::cos(t)}); }, false};
  m.family = [](double) { return closed_form_homoclinic("duffing-planar", {}); };
  m.box_lo = make_vec({-1.0, -1.0});
  m.box_hi = make_vec({2.0, 1.0});
  return m;
}

struct HolmesMarsdenParams {
  double I0 = 0.1;
  double q_c = 3.0;   // centre of the cubic potential
  double a2 = -0.5;   // U(q) = a2 (q - q_c)^2 + a3 (q - q_c)^3
  double a3 = 1.0 / 3.0;
  double delta = 1e-7;
};

/// Planar (p, q) factor at fixed I = I0 with effective potential
/// U(q) + I0^2 / (2 q^2).
inline SystemDef holmes_marsden_planar(const HolmesMarsdenParams& P) {
  const double I0 = P.I0, qc = P.q_c, a2 = P.a2, a3 = P.a3;
  auto V = [=](double q) { const double u = q - qc; return a2 * u * u + a3 * u * u * u + I0 * I0 / (2 * q * q); };
  auto dV = [=](double q) { const double u = q - qc; return 2 * a2 * u + 3 * a3 * u * u - I0 * I0 / (q * q * q); };
  SystemDef s;
  s.dimension = 2;
  s.chart = {"holmes-marsden-planar", {{"p", {}}, {"q", {}}}};
  s.symplectic = true;
  s.pairs = {{1, 0}};
  s.H0 = detail::scalar([V](const Vec& x) { return x[0] * x[0] / 2 + V(x[1]); },
                        [dV](const Vec& x) { return make_vec({x[0], dV(x[1])}); });
  s.F = s.H0;
  s.X0 = {[dV](const Vec& x, double) { return make_vec({-dV(x[1]), x[0]}); }, true};
  s.Y = zero_field(2);
  return s;
}

/// State (p, q, theta, I); H = p^2/2 + U(q) + I^2/(2 q^2) + eps sin(theta).
inline Model make_holmes_marsden(const HolmesMarsdenParams& P = {}) {
  if (!(P.I0 >= 0.0)) fail(ErrorKind::invalid_argument, "holmes-marsden: I0 must be nonnegative");
  const double qc = P.q_c, a2 = P.a2, a3 = P.a3;
  Model m;
  m.id = "holmes-marsden";
  m.params = {{"I0", P.I0}, {"q_c", qc}, {"a2", a2}, {"a3", a3}, {"delta", P.delta}};
  SystemDef& s = m.sys;
  s.dimension = 4;
  s.chart = {"holmes-marsden", {{"p", {}}, {"q", {}}, {"theta", kTwoPi}, {"I", {}}}};
  s.symplectic = true;
  s.pairs = {{1, 0}, {2, 3}};
  auto U = [=](double q) { const double u = q - qc; return a2 * u * u + a3 * u * u * u; };
  auto dU = [=](double q) { const double u = q - qc; return 2 * a2 * u + 3 * a3 * u * u; };
  s.H0 = detail::scalar([U](const Vec& x) { return x[0] * x[0] / 2 + U(x[1]) + x[3] * x[3] / (2 * x[1] * x[1]); },
                        [dU](const Vec& x) {
                          const double q = x[1], I = x[3];
                          return make_vec({x[0], dU(q) - I * I / (q * q * q), 0.0, I / (q * q)});
                        });
  s.H1 = detail::scalar([](const Vec& x) { return std::sin(x[2]); },
                        [](const Vec& x) { return make_vec({0.0, 0.0, std::cos(x[2]), 0.0}); });
  s.F = detail::scalar([](const Vec& x) { return x[3]; }, [](const Vec&) { return make_vec({0.0, 0.0, 0.0, 1.0}); });
  s.X0 = {[dU](const Vec& x, double) {
            const double q = x[1], I = x[3];
            return make_vec({-dU(q) + I * I / (q * q * q), x[0], I / (q * q), 0.0});
          },
          true};
  s.Y = {[](const Vec& x, double) { return make_vec({0.0, 0.0, 0.0, -std::cos(x[2])}); }, true};

  // Planar loop at I = I0, shared by the whole theta0 family.
  const SystemDef planar = holmes_marsden_planar(P);
  const SaddleResult sad = find_saddle(planar.X0, make_vec({0.0, qc}));
  if (!sad.hyperbolic()) fail(ErrorKind::rejected, "holmes-marsden: effective potential has no saddle near q_c");
  const EventSpec section{[](const Vec& x) { return x[0]; }, -1, true};
  auto loop = std::make_shared<HomoclinicOrbit>(shoot_homoclinic(planar, sad, P.delta, section));
  const double qs = sad.point[1];
  if (!(qs > 0.0)) fail(ErrorKind::rejected, "holmes-marsden: saddle outside q > 0");
  const double I0 = P.I0;
  const double w = I0 / (qs * qs);
  const double lu = sad.unstable_rate(), ls = sad.stable_rate();

  // Theta(t) - theta0 on the numeric span, then exponential tails.
  const double th = loop->t_handoff_plus, tl = loop->t_handoff_minus;
  IntegrateOptions io;
  io.tol = {1e-14, 1e-13};
  const VectorField rate{[loop, I0](const Vec&, double t) {
                           const double q = loop->state(t)[1];
                           return make_vec({I0 / (q * q)});
                         },
                         false};
  auto up = std::make_shared<Trajectory>(integrate(rate, make_vec({0.0}), 0.0, th, io));
  auto dn = std::make_shared<Trajectory>(integrate(rate, make_vec({0.0}), 0.0, -tl, io));
  const double Th = up->final_state()[0], Tl = dn->final_state()[0];
  const double dh = loop->state(th)[1] - qs, dl = loop->state(-tl)[1] - qs;
  const double q3 = qs * qs * qs;
  auto Theta = [=](double t) -> double {
    if (t >= th) {
      const double tau = t - th;
      return Th + I0 * (tau / (qs * qs) - 2 * dh * (std::exp(ls * tau) - 1.0) / (ls * q3));
    }
    if (t <= -tl) {
      const double tau = t + tl;
      return Tl + I0 * (tau / (qs * qs) - 2 * dl * (std::exp(lu * tau) - 1.0) / (lu * q3));
    }
    return t >= 0.0 ? up->at(t)[0] : dn->at(t)[0];
  };
  const double cp = Th - w * th + 2 * I0 * dh / (ls * q3);
  const double cm = Tl + w * tl + 2 * I0 * dl / (lu * q3);

  m.h0 = loop->h0;
  m.family_parameter = loop->h0;
  m.family = [=](double th0) {
    HomoclinicOrbit o;
    o.state = [loop, Theta, th0, I0](double t) {
      const Vec x = loop->state(t);
      return make_vec({x[0], x[1], th0 + Theta(t), I0});
    };
    o.phase = [Theta, th0](double t) { return th0 + Theta(t); };
    o.distance = loop->distance;
    o.decay = loop->decay;
    o.omega = w;
    o.c_plus = th0 + cp;
    o.c_minus = th0 + cm;
    o.z0 = o.state(0.0);
    o.h0 = loop->h0;
    o.f0 = I0;
    o.family_phase = th0;
    o.t_handoff_plus = th;
    o.t_handoff_minus = tl;
    o.sample_times = loop->sample_times;
    o.limit.kind = LimitKind::fixed_point_times_circle;
    o.limit.anchor = make_vec({0.0, qs, 0.0, I0});
    o.limit.omega = w;
    o.limit.F_value = I0;
    o.limit.DF_on_limit = make_vec({0.0, 0.0, 0.0, 1.0});
    o.limit.moves_with_epsilon = true;
    o.limit.circle_coords = {2};
    return o;
  };
  SplittingSetup sp;
  sp.section = {[](const Vec& x) { return std::sin(x[2]); }, +1, true};
  sp.planar[0] = 0;
  sp.planar[1] = 1;
  sp.energy_coord = 3;
  sp.anchor_guess = make_vec({0.0, qs, 0.0, I0});
  m.splitting = sp;
  m.box_lo = make_vec({-1.0, qc - 0.5, 0.0, std::max(0.0, I0 - 0.5)});
  m.box_hi = make_vec({1.0, qc + 1.5, kTwoPi, I0 + 0.5});
  return m;
}

namespace detail {

inline double rtbp_integrand(const Vec& z) {
  const double x = z[0], s = z[3];
  const double x2 = x * x, x4 = x2 * x2;
  const double B = 1.0 + 2.0 * x2 * std::cos(s) + x4;
  return x4 * std::sin(s) * (1.0 - std::pow(B, -1.5));
}

inline double rtbp_integrand_ds(const Vec& z) {
  const double x = z[0], s = z[3];
  const double x2 = x * x, x4 = x2 * x2;
  const double B = 1.0 + 2.0 * x2 * std::cos(s) + x4;
  const double sn = std::sin(s);
  return x4 * (std::cos(s) * (1.0 - std::pow(B, -1.5)) - 3.0 * x2 * sn * sn * std::pow(B, -2.5));
}

}  // namespace detail

/// McGehee chart (x, y, rho, s) at mu = 0; the perturbation is known only
/// through its Melnikov integrand.
inline Model make_rtbp(double rho0, RtbpOptions opt = {}) {
  if (!(rho0 > 0.0)) fail(ErrorKind::invalid_argument, "rtbp-mcgehee: rho0 must be positive");
  Model m;
  m.id = "rtbp-mcgehee";
  m.params = {{"rho0", rho0}, {"T", opt.t_cap}};
  SystemDef& s = m.sys;
  s.dimension = 4;
  s.chart = {"mcgehee", {{"x", {}}, {"y", {}}, {"rho", {}}, {"s", kTwoPi}}};
  s.symplectic = false;
  s.X0 = rtbp_field();
  s.Y = zero_field(4);
  s.H0 = detail::scalar([](const Vec& z) { return rtbp_energy(z); },
                        [](const Vec& z) {
                          const double x = z[0], y = z[1], r = z[2];
                          return make_vec({x * x * x * r * r - 2.0 * x, y, 0.5 * std::pow(x, 4) * r, 0.0});
                        });
  s.F = detail::scalar([](const Vec& z) { return z[2]; }, [](const Vec&) { return make_vec({0.0, 0.0, 1.0, 0.0}); });
  s.integrand_override = [](const Vec& z, double) { return detail::rtbp_integrand(z); };
  s.integrand_phase_derivative = [](const Vec& z, double) { return detail::rtbp_integrand_ds(z); };
  m.h0 = 0.0;
  m.family_parameter = rho0;
  m.family = rtbp_family(rho0, opt);
  m.box_lo = make_vec({0.0, -1.0, rho0, 0.0});
  m.box_hi = make_vec({2.0 / rho0, 1.0, rho0, kTwoPi});
  return m;
}

inline double param_or(const std::map<std::string, double>& p, const std::string& k, double dflt) {
  auto it = p.find(k);
  return it == p.end() ? dflt : it->second;
}

/// Dispatch on the model id with parameters by name.
inline Model make_model(const std::string& id, const std::map<std::string, double>& p) {
  if (id == "duffing-oscillator") return make_duffing_oscillator(param_or(p, "alpha", 1.0), param_or(p, "g0", 0.5));
  if (id == "holmes-marsden") {
    HolmesMarsdenParams hp;
    hp.I0 = param_or(p, "I0", hp.I0);
    hp.q_c = param_or(p, "q_c", hp.q_c);
    hp.a2 = param_or(p, "a2", hp.a2);
    hp.a3 = param_or(p, "a3", hp.a3);
    hp.delta = param_or(p, "delta", hp.delta);
    return make_holmes_marsden(hp);
  }
  if (id == "rtbp-mcgehee") {
    RtbpOptions o;
    o.t_cap = param_or(p, "T", o.t_cap);
    return make_rtbp(param_or(p, "rho0", 3.0), o);
  }
  fail(ErrorKind::invalid_argument, "unknown model id: " + id);
}

}  // namespace melnikov
