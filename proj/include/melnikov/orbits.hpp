#pragma once

#include "melnikov/common.hpp"
#include "melnikov/fields.hpp"
#include "melnikov/hamcore.hpp"
#include "melnikov/odeint.hpp"

#include <Eigen/Eigenvalues>

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace melnikov {

enum class SpectrumKind { saddle, center, degenerate, mixed };

inline const char* to_string(SpectrumKind k) {
  switch (k) {
    case SpectrumKind::saddle: return "saddle";
    case SpectrumKind::center: return "center";
    case SpectrumKind::degenerate: return "degenerate";
    case SpectrumKind::mixed: return "mixed";
  }
  return "?";
}

struct SaddleResult {
  Vec point;
  Eigen::VectorXcd eigenvalues;   // sorted by decreasing real part
  Eigen::MatrixXcd eigenvectors;  // columns match eigenvalues
  SpectrumKind kind = SpectrumKind::mixed;
  double residual = 0.0;
  int iterations = 0;

  bool hyperbolic() const { return kind == SpectrumKind::saddle; }
  double unstable_rate() const { return eigenvalues[0].real(); }
  double stable_rate() const { return eigenvalues[eigenvalues.size() - 1].real(); }
  Vec unstable_vector() const { return eigenvectors.col(0).real().normalized(); }
  Vec stable_vector() const { return eigenvectors.col(eigenvectors.cols() - 1).real().normalized(); }
};

/// Newton iteration for an equilibrium followed by a spectral classification.
inline SaddleResult find_saddle(const VectorField& field, const Vec& guess, int max_iter = 50) {
  SaddleResult out;
  Vec x = guess;
  Vec f = field(x, 0.0);
  int it = 0;
  while (f.norm() > 1e-12) {
    if (++it > max_iter) fail(ErrorKind::no_convergence, "find_saddle: no convergence in 50 iterations");
    const Mat J = fd_jacobian(field, x);
    Eigen::FullPivLU<Mat> lu(J);
    if (!lu.isInvertible()) fail(ErrorKind::no_convergence, "find_saddle: singular Jacobian away from an equilibrium");
    x -= lu.solve(f);
    f = field(x, 0.0);
    if (!f.allFinite()) fail(ErrorKind::no_convergence, "find_saddle: Newton left the domain");
  }
  out.point = x;
  out.residual = f.norm();
  out.iterations = it;

  const Mat J = fd_jacobian(field, x);
  Eigen::EigenSolver<Mat> es(J);
  Eigen::VectorXcd ev = es.eigenvalues();
  Eigen::MatrixXcd V = es.eigenvectors();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(ev.size()));
  for (Eigen::Index i = 0; i < ev.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ev[a].real() > ev[b].real(); });
  out.eigenvalues.resize(ev.size());
  out.eigenvectors.resize(V.rows(), V.cols());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    out.eigenvalues[i] = ev[order[static_cast<std::size_t>(i)]];
    out.eigenvectors.col(i) = V.col(order[static_cast<std::size_t>(i)]);
  }

  const double scale = std::max(1.0, J.norm());
  const double tiny = 1e-6 * scale;
  bool pos = false, neg = false, zero_re = false, all_zero = true;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    const auto z = out.eigenvalues[i];
    if (std::abs(z) > tiny) all_zero = false;
    if (z.real() > tiny) pos = true;
    else if (z.real() < -tiny) neg = true;
    else zero_re = true;
  }
  if (all_zero) out.kind = SpectrumKind::degenerate;
  else if (pos && neg && !zero_re) out.kind = SpectrumKind::saddle;
  else if (!pos && !neg) out.kind = SpectrumKind::center;
  else out.kind = SpectrumKind::mixed;
  return out;
}

enum class LimitKind { fixed_point_times_circle, degenerate_circle_at_infinity };

struct LimitOrbitDesc {
  LimitKind kind = LimitKind::fixed_point_times_circle;
  Vec anchor;
  double omega = 0.0;
  double F_value = 0.0;
  Vec DF_on_limit;
  bool moves_with_epsilon = true;
  /// Coordinates that move along the limit orbit; all others are fixed there.
  std::vector<Eigen::Index> circle_coords;
};

/// Field residual at the anchor with the circle coordinates projected out.
inline double limit_residual(const LimitOrbitDesc& lim, const VectorField& X0) {
  Vec v = X0(lim.anchor, 0.0);
  for (auto i : lim.circle_coords) v[i] = 0.0;
  return v.norm();
}

enum class DecayKind { exponential, polynomial };

struct DecayClass {
  DecayKind kind = DecayKind::exponential;
  double rate = 1.0;  // lambda for exponential, exponent for polynomial
};

/// t -> phi_0(t, z0) with its asymptotic data. The time origin is the
/// declared section crossing.
struct HomoclinicOrbit {
  std::function<Vec(double)> state;
  /// Unwrapped phase coordinate along the orbit; omega*t + c_pm + o(1).
  std::function<double(double)> phase;
  /// Distance from state(t) to the limit orbit.
  std::function<double(double)> distance;
  LimitOrbitDesc limit;
  DecayClass decay;
  double omega = 0.0;
  double c_plus = 0.0;
  double c_minus = 0.0;
  Vec z0;
  double h0 = 0.0;
  double f0 = 0.0;
  double family_phase = 0.0;
  /// Time after which (and before whose negative) tails replace numeric arcs.
  double t_handoff_plus = kInf;
  double t_handoff_minus = kInf;
  /// Times at which the orbit was actually computed; used for drift audits.
  std::vector<double> sample_times;

  static constexpr double kInf = std::numeric_limits<double>::infinity();
};

using HomoclinicFamily = std::function<HomoclinicOrbit(double)>;

/// Maximum deviation of a scalar from its value at t = 0 over sample times.
inline double orbit_drift(const HomoclinicOrbit& orbit, const ScalarField& field) {
  const double f0 = field(orbit.state(0.0));
  double worst = 0.0;
  for (double t : orbit.sample_times) worst = std::max(worst, std::abs(field(orbit.state(t)) - f0));
  return worst;
}

/// The orbit seen through a chart map; phase and asymptotics are unchanged.
inline HomoclinicOrbit transform_orbit(const HomoclinicOrbit& o, const ChartMap& map) {
  HomoclinicOrbit out = o;
  out.state = [st = o.state, f = map.forward](double t) { return f(st(t)); };
  if (o.z0.size()) out.z0 = map.forward(o.z0);
  if (o.limit.anchor.size()) out.limit.anchor = map.forward(o.limit.anchor);
  return out;
}

inline std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return v;
}

namespace detail {

inline double sech(double x) { return 1.0 / std::cosh(x); }

// Loop of z2^2/2 - z1^2/2 + z1^3/3 = 0 with z2 = 0 at t = 0.
inline double duffing_z1(double t) {
  const double s = sech(0.5 * t);
  return 1.5 * s * s;
}
inline double duffing_z2(double t) {
  const double s = sech(0.5 * t);
  return -1.5 * s * s * std::tanh(0.5 * t);
}

inline double param(const std::map<std::string, double>& p, const std::string& k, double dflt) {
  auto it = p.find(k);
  return it == p.end() ? dflt : it->second;
}

}  // namespace detail

/// Registered closed forms: "duffing-oscillator" (parameters alpha, g0,
/// theta0) and its planar factor "duffing-planar".
inline HomoclinicOrbit closed_form_homoclinic(const std::string& model_id, const std::map<std::string, double>& params) {
  using detail::duffing_z1;
  using detail::duffing_z2;
  HomoclinicOrbit o;
  o.decay = {DecayKind::exponential, 1.0};
  o.sample_times = linspace(-40.0, 40.0, 801);
  if (model_id == "duffing-planar") {
    o.state = [](double t) { return make_vec({duffing_z1(t), duffing_z2(t)}); };
    o.phase = [](double) { return 0.0; };
    o.distance = [](double t) { return std::hypot(duffing_z1(t), duffing_z2(t)); };
    o.limit.anchor = Vec::Zero(2);
    o.limit.DF_on_limit = Vec::Zero(2);
    o.z0 = o.state(0.0);
    return o;
  }
  if (model_id != "duffing-oscillator") fail(ErrorKind::invalid_argument, "closed_form_homoclinic: unknown model id " + model_id);
  const double alpha = detail::param(params, "alpha", 1.0);
  const double g0 = detail::param(params, "g0", 0.5);
  const double th0 = detail::param(params, "theta0", 0.0);
  if (!(alpha > 0.0) || !(g0 > 0.0)) fail(ErrorKind::invalid_argument, "duffing-oscillator needs alpha > 0 and g0 > 0");
  const double A = std::sqrt(2.0 * g0 / alpha);
  o.state = [=](double t) {
    const double ph = alpha * t + th0;
    return make_vec({duffing_z1(t), duffing_z2(t), A * std::cos(ph), -A * std::sin(ph)});
  };
  o.phase = [=](double t) { return alpha * t + th0; };
  o.distance = [](double t) { return std::hypot(duffing_z1(t), duffing_z2(t)); };
  o.omega = alpha;
  o.c_plus = o.c_minus = th0;
  o.z0 = o.state(0.0);
  o.h0 = g0;
  o.f0 = 0.0;
  o.family_phase = th0;
  o.limit.kind = LimitKind::fixed_point_times_circle;
  o.limit.anchor = make_vec({0.0, 0.0, A, 0.0});
  o.limit.omega = alpha;
  o.limit.F_value = 0.0;
  o.limit.DF_on_limit = Vec::Zero(4);
  o.limit.moves_with_epsilon = true;
  o.limit.circle_coords = {2, 3};
  return o;
}

struct ShootOptions {
  Tolerance tol{1e-13, 1e-13};
  double time_cap = 200.0;
  double max_drift = 1e-8;
};

/// Planar homoclinic loop of a one-degree-of-freedom system. The unstable
/// branch is launched from saddle + delta*v_u and the stable branch is
/// integrated backward from saddle + delta*v_s, each until the section; time
/// is shifted so the crossing is t = 0. Outside the arcs, linear tails.
inline HomoclinicOrbit shoot_homoclinic(const SystemDef& planar, const SaddleResult& saddle, double delta,
                                        const EventSpec& section, ShootOptions opt = {}) {
  if (planar.dimension != 2) fail(ErrorKind::invalid_argument, "shoot_homoclinic: planar system required");
  if (!(delta > 0.0)) fail(ErrorKind::rejected, "shoot_homoclinic: degenerate launch offset");
  if (!saddle.hyperbolic()) fail(ErrorKind::rejected, "shoot_homoclinic: equilibrium is not a saddle");
  const Vec xs = saddle.point;
  const double lu = saddle.unstable_rate(), ls = saddle.stable_rate();
  const Vec vu = saddle.unstable_vector(), vs = saddle.stable_vector();

  IntegrateOptions io;
  io.tol = opt.tol;
  io.events = {{section.fn, section.direction, true}};

  auto branch = [&](const Vec& v, double t_end) -> std::shared_ptr<Trajectory> {
    for (double sgn : {1.0, -1.0}) {
      try {
        auto tr = std::make_shared<Trajectory>(integrate(planar.X0, (xs + sgn * delta * v).eval(), 0.0, t_end, io));
        if (tr->stopped_by_event()) return tr;
      } catch (const Error&) {
      }
    }
    return nullptr;
  };
  auto up = branch(vu, opt.time_cap);
  auto sp = branch(vs, -opt.time_cap);
  if (!up || !sp) fail(ErrorKind::no_crossing, "shoot_homoclinic: no homoclinic loop at these parameters");

  const double tu = up->t_final();   // > 0
  const double tsn = sp->t_final();  // < 0
  const double gap = (up->final_state() - sp->final_state()).norm();
  if (gap > 1e-6) fail(ErrorKind::no_crossing, "shoot_homoclinic: branches miss each other at the section");

  const double h0 = planar.H0(xs);
  const double drift = std::max(integral_drift(*up, planar.H0), integral_drift(*sp, planar.H0));
  if (drift > opt.max_drift) fail(ErrorKind::rejected, "shoot_homoclinic: energy drift above threshold, orbit rejected");

  const Vec du = up->initial_state() - xs, ds = sp->initial_state() - xs;
  HomoclinicOrbit o;
  o.state = [=](double t) -> Vec {
    if (t <= -tu) return xs + du * std::exp(lu * (t + tu));
    if (t <= 0.0) return up->at(t + tu);
    if (t < -tsn) return sp->at(t + tsn);
    return xs + ds * std::exp(ls * (t + tsn));
  };
  o.phase = [](double) { return 0.0; };
  o.distance = [st = o.state, xs](double t) { return (st(t) - xs).norm(); };
  o.decay = {DecayKind::exponential, std::min(lu, -ls)};
  o.z0 = o.state(0.0);
  o.h0 = h0;
  o.f0 = planar.F ? planar.F(xs) : h0;
  o.t_handoff_minus = tu;
  o.t_handoff_plus = -tsn;
  for (double t : up->times()) o.sample_times.push_back(t - tu);
  for (double t : sp->times()) o.sample_times.push_back(t - tsn);
  std::sort(o.sample_times.begin(), o.sample_times.end());
  o.limit.anchor = xs;
  o.limit.DF_on_limit = Vec::Zero(2);
  return o;
}

/// McGehee-chart parabolic orbit with y = 0 at t = 0 and x(0) = 2/rho0.
/// The unperturbed field is x' = -x^3 y/2, y' = -x^4 + x^6 rho^2/2,
/// rho' = 0, s' = 1 - x^4 rho.
struct RtbpOptions {
  double t_cap = 1e4;
  Tolerance tol{1e-14, 1e-13};
};

inline VectorField rtbp_field() {
  return {[](const Vec& z, double) {
            const double x = z[0], y = z[1], r = z[2];
            const double x2 = x * x, x3 = x2 * x, x4 = x2 * x2;
            return make_vec({-0.5 * x3 * y, -x4 + 0.5 * x4 * x2 * r * r, 0.0, 1.0 - x4 * r});
          },
          true};
}

inline double rtbp_energy(const Vec& z) {
  const double x = z[0], y = z[1], r = z[2];
  const double x2 = x * x;
  return 0.5 * y * y + 0.25 * x2 * x2 * r * r - x2;
}

namespace detail {

struct RtbpArcs {
  double rho = 0.0;
  double t_cap = 0.0;
  Trajectory fwd, bwd;
};

// Leading-order escape: x' = -(sqrt 2 / 2) x^4 gives x^-3 growing at rate k.
inline constexpr double rtbp_k = 2.1213203435596424;  // 3*sqrt(2)/2

}  // namespace detail

inline HomoclinicOrbit parabolic_orbit_rtbp(double rho0, double s0 = 0.0, RtbpOptions opt = {});

/// Shared numeric arcs for a whole s0 family.
inline HomoclinicFamily rtbp_family(double rho0, RtbpOptions opt = {}) {
  if (!(rho0 > 0.0)) fail(ErrorKind::invalid_argument, "parabolic_orbit_rtbp: rho0 must be positive");
  auto arcs = std::make_shared<detail::RtbpArcs>();
  arcs->rho = rho0;
  arcs->t_cap = opt.t_cap;
  const Vec start = make_vec({2.0 / rho0, 0.0, rho0, 0.0});
  IntegrateOptions io;
  io.tol = opt.tol;
  arcs->fwd = integrate(rtbp_field(), start, 0.0, opt.t_cap, io);
  arcs->bwd = integrate(rtbp_field(), start, 0.0, -opt.t_cap, io);

  const double k = detail::rtbp_k;
  const Vec zf = arcs->fwd.final_state(), zb = arcs->bwd.final_state();
  const double T = opt.t_cap;
  const double c_plus = zf[3] - T - 3.0 * rho0 * zf[0] / k;
  const double c_minus = zb[3] + T + 3.0 * rho0 * zb[0] / k;

  // sigma(t) with s0 = 0, including the asymptotic continuation past +-T.
  auto base_state = [arcs, k, T, zf, zb](double t) -> Vec {
    if (std::abs(t) <= T) return t >= 0.0 ? arcs->fwd.at(t) : arcs->bwd.at(t);
    const bool fwd = t > 0.0;
    const Vec& ze = fwd ? zf : zb;
    const double tau = std::abs(t) - T;
    const double r = arcs->rho;
    const double x = std::pow(std::pow(ze[0], -3.0) + k * tau, -1.0 / 3.0);
    const double y2 = std::max(0.0, 2.0 * x * x - 0.5 * std::pow(x, 4) * r * r);
    const double sgn = fwd ? 1.0 : -1.0;
    const double s = ze[3] + sgn * (tau - 3.0 * r * (ze[0] - x) / k);
    return make_vec({x, sgn * std::sqrt(y2), r, s});
  };

  std::vector<double> samples;
  for (double t : arcs->bwd.times()) samples.push_back(t);
  for (double t : arcs->fwd.times()) if (t > 0.0) samples.push_back(t);

  return [=](double s0) {
    HomoclinicOrbit o;
    o.state = [base_state, s0](double t) {
      Vec z = base_state(t);
      z[3] += s0;
      return z;
    };
    o.phase = [base_state, s0](double t) { return base_state(t)[3] + s0; };
    o.distance = [base_state](double t) {
      const Vec z = base_state(t);
      return std::hypot(z[0], z[1]);
    };
    o.decay = {DecayKind::polynomial, 1.0 / 3.0};
    o.omega = 1.0;
    o.c_plus = c_plus + s0;
    o.c_minus = c_minus + s0;
    o.z0 = o.state(0.0);
    o.h0 = 0.0;
    o.f0 = rho0;
    o.family_phase = s0;
    o.t_handoff_plus = T;
    o.t_handoff_minus = T;
    o.sample_times = samples;
    o.limit.kind = LimitKind::degenerate_circle_at_infinity;
    o.limit.anchor = make_vec({0.0, 0.0, rho0, 0.0});
    o.limit.omega = 1.0;
    o.limit.F_value = rho0;
    o.limit.DF_on_limit = make_vec({0.0, 0.0, 1.0, 0.0});
    o.limit.moves_with_epsilon = false;
    o.limit.circle_coords = {3};
    return o;
  };
}

inline HomoclinicOrbit parabolic_orbit_rtbp(double rho0, double s0, RtbpOptions opt) {
  return rtbp_family(rho0, opt)(s0);
}

}  // namespace melnikov
