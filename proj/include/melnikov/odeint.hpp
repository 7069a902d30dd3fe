#pragma once

// Adaptive Dormand-Prince 5(4) integration with PI step control, the free
// fourth-order dense interpolant, event location and an optional quadrature
// accumulator channel. Templated on the scalar type; `double` is the working
// precision, `long double` is available for ill-conditioned reference runs.

#include "melnikov/common.hpp"
#include "melnikov/fields.hpp"
#include "melnikov/roots.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <utility>
#include <vector>

namespace melnikov {

struct Tolerance {
  double abs = 1e-12;
  double rel = 1e-12;
};

/// Zero-crossing specification. `direction` filters sign changes as physical
/// time increases: +1 only upward, -1 only downward, 0 both.
template <class S>
struct BasicEventSpec {
  std::function<S(const VecT<S>&)> fn;
  int direction = 0;
  bool terminal = false;
};
using EventSpec = BasicEventSpec<double>;

template <class S>
struct BasicEventHit {
  S t = S(0);
  VecT<S> state;
  std::size_t which = 0;
};
using EventHit = BasicEventHit<double>;

/// Integration failure carrying the last good point, or for blow-ups the
/// time bracket in which the state became non-finite.
class IntegrationError : public Error {
 public:
  IntegrationError(ErrorKind kind, const std::string& what, double t_last, Vec last, double t_bad)
      : Error(kind, what), t_last_(t_last), last_(std::move(last)), t_bad_(t_bad) {}
  double t_last() const { return t_last_; }
  const Vec& last_state() const { return last_; }
  double t_bad() const { return t_bad_; }

 private:
  double t_last_;
  Vec last_;
  double t_bad_;
};

namespace detail {

template <class S>
struct Dopri5 {
  static constexpr S q(long long a, long long b) { return S(a) / S(b); }
  static constexpr S c2 = q(1, 5), c3 = q(3, 10), c4 = q(4, 5), c5 = q(8, 9);
  static constexpr S a21 = q(1, 5);
  static constexpr S a31 = q(3, 40), a32 = q(9, 40);
  static constexpr S a41 = q(44, 45), a42 = q(-56, 15), a43 = q(32, 9);
  static constexpr S a51 = q(19372, 6561), a52 = q(-25360, 2187), a53 = q(64448, 6561), a54 = q(-212, 729);
  static constexpr S a61 = q(9017, 3168), a62 = q(-355, 33), a63 = q(46732, 5247), a64 = q(49, 176),
                     a65 = q(-5103, 18656);
  static constexpr S a71 = q(35, 384), a73 = q(500, 1113), a74 = q(125, 192), a75 = q(-2187, 6784), a76 = q(11, 84);
  static constexpr S e1 = q(71, 57600), e3 = q(-71, 16695), e4 = q(71, 1920), e5 = q(-17253, 339200),
                     e6 = q(22, 525), e7 = q(-1, 40);
  static constexpr S d1 = q(-12715105075LL, 11282082432LL), d3 = q(87487479700LL, 32700410799LL),
                     d4 = q(-10690763975LL, 1880347072LL), d5 = q(701980252875LL, 199316789632LL),
                     d6 = q(-1453857185LL, 822651844LL), d7 = q(69997945LL, 29380423LL);
};

}  // namespace detail

/// One accepted step's continuous extension; theta = (t - t_start) / h.
template <class S>
struct BasicDenseSegment {
  S t_start = S(0);
  S h = S(0);
  Eigen::Matrix<S, Eigen::Dynamic, 5> coeff;

  VecT<S> eval(S t) const {
    const S th = (t - t_start) / h;
    const S th1 = S(1) - th;
    return coeff.col(0) + th * (coeff.col(1) + th1 * (coeff.col(2) + th * (coeff.col(3) + th1 * coeff.col(4))));
  }
  S t_end() const { return t_start + h; }
};

template <class Field, class S>
class Integrator;

/// Time-ordered samples with a dense interpolant. Backward integrations are
/// stored in increasing time order with direction() == -1.
template <class S>
class BasicTrajectory {
 public:
  using VecS = VecT<S>;

  const std::vector<S>& times() const { return times_; }
  const std::vector<VecS>& states() const { return states_; }
  std::size_t size() const { return times_.size(); }
  bool empty() const { return times_.empty(); }
  int direction() const { return direction_; }
  Tolerance tolerance() const { return tol_; }
  bool has_dense() const { return !segments_.empty(); }
  S t_min() const { return times_.front(); }
  S t_max() const { return times_.back(); }
  S t_origin() const { return direction_ > 0 ? t_min() : t_max(); }
  S t_final() const { return direction_ > 0 ? t_max() : t_min(); }
  const VecS& initial_state() const { return direction_ > 0 ? states_.front() : states_.back(); }
  const VecS& final_state() const { return direction_ > 0 ? states_.back() : states_.front(); }
  const std::vector<BasicEventHit<S>>& events() const { return events_; }
  bool stopped_by_event() const { return stopped_by_event_; }

  /// Copy restricted to the leading n coordinates.
  BasicTrajectory head(Eigen::Index n) const {
    BasicTrajectory out = *this;
    for (auto& s : out.states_) s = s.head(n).eval();
    for (auto& seg : out.segments_) seg.coeff = seg.coeff.topRows(n).eval();
    for (auto& ev : out.events_) ev.state = ev.state.head(n).eval();
    return out;
  }

  /// Dense state at t, clamped to [t_min, t_max].
  VecS at(S t) const {
    if (segments_.empty()) {
      if (times_.size() == 1 || t == times_.front()) return states_.front();
      if (t == times_.back()) return states_.back();
      fail(ErrorKind::invalid_argument, "trajectory has no dense output");
    }
    if (t <= times_.front()) return states_.front();
    if (t >= times_.back()) return states_.back();
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - times_.begin()) - 1;
    return segments_[std::min(k, segments_.size() - 1)].eval(t);
  }

 private:
  template <class Field, class T>
  friend class Integrator;

  std::vector<S> times_;
  std::vector<VecS> states_;
  std::vector<BasicDenseSegment<S>> segments_;
  std::vector<BasicEventHit<S>> events_;
  Tolerance tol_;
  int direction_ = 1;
  bool stopped_by_event_ = false;

  void finalize() {
    if (direction_ < 0) {
      std::reverse(times_.begin(), times_.end());
      std::reverse(states_.begin(), states_.end());
      std::reverse(segments_.begin(), segments_.end());
    }
  }
};
using Trajectory = BasicTrajectory<double>;

template <class S>
struct BasicIntegrateOptions {
  Tolerance tol{};
  double h_init = 0.0;
  long max_steps = 20'000'000;
  bool dense = true;
  std::vector<BasicEventSpec<S>> events{};
  /// Dense sub-samples per step scanned for event sign changes.
  int event_subdivisions = 4;
  /// Index of a quadrature accumulator component, or -1.
  Eigen::Index accumulator = -1;
};
using IntegrateOptions = BasicIntegrateOptions<double>;

/// Owns the mutable scratch of one integration; one instance per worker.
template <class Field, class S = double>
class Integrator {
 public:
  using VecS = VecT<S>;

  explicit Integrator(Field field, BasicIntegrateOptions<S> opt = {})
      : f_(std::move(field)), opt_(std::move(opt)) {}

  BasicTrajectory<S> run(const VecS& start, S t0, S t1) {
    using std::abs;
    using std::sqrt;
    using std::pow;
    using D = detail::Dopri5<S>;
    if (t0 == t1) fail(ErrorKind::invalid_argument, "integrate: t0 == t1");
    if (!start.allFinite()) fail(ErrorKind::invalid_argument, "integrate: non-finite start state");
    BasicTrajectory<S> tr;
    tr.tol_ = opt_.tol;
    tr.direction_ = t1 > t0 ? 1 : -1;
    const S dir = S(tr.direction_);
    const Eigen::Index n = start.size();
    const S atol = S(opt_.tol.abs), rtol = S(opt_.tol.rel);
    acc_error_ = 0.0;

    S t = t0;
    VecS y = start;
    VecS k1 = f_(y, t), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), y1(n), ytmp(n), err(n);
    ++evals_;
    tr.times_.push_back(t);
    tr.states_.push_back(y);

    S h = opt_.h_init > 0.0 ? S(opt_.h_init) : initial_step(y, k1, t, dir, t1);
    h = std::min(h, S(abs(t1 - t)));
    S facold = S(1e-4);
    bool last_rejected = false;
    std::vector<S> ev_prev;
    for (const auto& e : opt_.events) ev_prev.push_back(e.fn(y));

    long steps = 0;
    while (dir * (t1 - t) > S(0)) {
      if (++steps > opt_.max_steps) {
        throw IntegrationError(ErrorKind::step_underflow, "integrate: step budget exhausted", double(t),
                               y.template cast<double>(), double(t));
      }
      const S min_h = S(16) * std::numeric_limits<S>::epsilon() * std::max(S(1), S(abs(t)));
      if (h < min_h) {
        std::ostringstream os;
        os << "integrate: step size underflow at t=" << double(t);
        throw IntegrationError(ErrorKind::step_underflow, os.str(), double(t), y.template cast<double>(),
                               double(t));
      }
      bool final_step = false;
      if (h >= abs(t1 - t)) {
        h = abs(t1 - t);
        final_step = true;
      }
      const S hs = dir * h;
      ytmp = y + hs * D::a21 * k1;
      k2 = f_(ytmp, t + D::c2 * hs);
      ytmp = y + hs * (D::a31 * k1 + D::a32 * k2);
      k3 = f_(ytmp, t + D::c3 * hs);
      ytmp = y + hs * (D::a41 * k1 + D::a42 * k2 + D::a43 * k3);
      k4 = f_(ytmp, t + D::c4 * hs);
      ytmp = y + hs * (D::a51 * k1 + D::a52 * k2 + D::a53 * k3 + D::a54 * k4);
      k5 = f_(ytmp, t + D::c5 * hs);
      ytmp = y + hs * (D::a61 * k1 + D::a62 * k2 + D::a63 * k3 + D::a64 * k4 + D::a65 * k5);
      k6 = f_(ytmp, t + hs);
      y1 = y + hs * (D::a71 * k1 + D::a73 * k3 + D::a74 * k4 + D::a75 * k5 + D::a76 * k6);
      const S tn = final_step ? t1 : t + hs;
      k7 = f_(y1, tn);
      evals_ += 6;
      err = hs * (D::e1 * k1 + D::e3 * k3 + D::e4 * k4 + D::e5 * k5 + D::e6 * k6 + D::e7 * k7);

      if (!y1.allFinite() || !err.allFinite()) {
        if (h > S(1e3) * min_h) {
          h *= S(0.1);
          last_rejected = true;
          continue;
        }
        std::ostringstream os;
        os << "integrate: non-finite state in (" << double(t) << ", " << double(tn) << ")";
        throw IntegrationError(ErrorKind::blow_up, os.str(), double(t), y.template cast<double>(), double(tn));
      }

      S sq = S(0);
      for (Eigen::Index i = 0; i < n; ++i) {
        const S sc = atol + rtol * std::max(S(abs(y[i])), S(abs(y1[i])));
        const S r = err[i] / sc;
        sq += r * r;
      }
      const S enorm = sqrt(sq / S(n));

      constexpr double beta = 0.04, safe = 0.9, expo1 = 0.2 - beta * 0.75;
      const S fac11 = pow(std::max(enorm, S(1e-300)), S(expo1));
      if (enorm <= S(1)) {
        S fac = fac11 / pow(facold, S(beta));
        fac = std::clamp(S(fac / S(safe)), S(0.1), S(5.0));
        S hnew = h / fac;
        facold = std::max(enorm, S(1e-4));
        if (last_rejected) hnew = std::min(hnew, h);
        last_rejected = false;

        if (opt_.accumulator >= 0) acc_error_ += double(abs(err[opt_.accumulator]));

        BasicDenseSegment<S> seg;
        if (opt_.dense || !opt_.events.empty()) {
          seg.t_start = t;
          seg.h = tn - t;
          seg.coeff.resize(n, 5);
          const VecS ydiff = y1 - y;
          const VecS bspl = seg.h * k1 - ydiff;
          seg.coeff.col(0) = y;
          seg.coeff.col(1) = ydiff;
          seg.coeff.col(2) = bspl;
          seg.coeff.col(3) = ydiff - seg.h * k7 - bspl;
          seg.coeff.col(4) =
              seg.h * (D::d1 * k1 + D::d3 * k3 + D::d4 * k4 + D::d5 * k5 + D::d6 * k6 + D::d7 * k7);
        }

        S t_stop = tn;
        const bool stop = !opt_.events.empty() && scan_events(tr, seg, ev_prev, y1, t_stop);
        if (stop) {
          const VecS ys = seg.eval(t_stop);
          if (opt_.dense) tr.segments_.push_back(seg);
          tr.times_.push_back(t_stop);
          tr.states_.push_back(ys);
          tr.stopped_by_event_ = true;
          tr.finalize();
          return tr;
        }

        if (opt_.dense) tr.segments_.push_back(std::move(seg));
        t = tn;
        y = y1;
        k1 = k7;
        tr.times_.push_back(t);
        tr.states_.push_back(y);
        h = hnew;
      } else {
        h = h / std::min(S(5.0), S(fac11 / S(safe)));
        last_rejected = true;
      }
    }
    tr.finalize();
    return tr;
  }

  /// Sum of the controller's local-error estimates on the accumulator.
  double accumulator_error() const { return acc_error_; }
  long evaluations() const { return evals_; }

 private:
  Field f_;
  BasicIntegrateOptions<S> opt_;
  double acc_error_ = 0.0;
  long evals_ = 0;

  S initial_step(const VecS& y, const VecS& f0, S t, S dir, S t1) {
    using std::abs;
    auto scale = [&](const VecS& v) {
      S s = S(0);
      for (Eigen::Index i = 0; i < v.size(); ++i) {
        const S sc = S(opt_.tol.abs) + S(opt_.tol.rel) * S(abs(y[i]));
        s += (v[i] / sc) * (v[i] / sc);
      }
      return S(std::sqrt(s / S(v.size())));
    };
    const S d0 = scale(y), d1 = scale(f0);
    S h0 = (d0 < S(1e-5) || d1 < S(1e-5)) ? S(1e-6) : S(0.01) * d0 / d1;
    h0 = std::min(h0, S(abs(t1 - t)));
    const VecS y1 = y + dir * h0 * f0;
    const VecS f1 = f_(y1, t + dir * h0);
    ++evals_;
    const S d2 = scale(f1 - f0) / h0;
    const S dm = std::max(d1, d2);
    const S h1 = dm <= S(1e-15) ? std::max(S(1e-6), S(h0 * S(1e-3))) : S(std::pow(S(0.01) / dm, S(0.2)));
    // Zero components under a tiny absolute tolerance can drive the estimate
    // to absurd values; the controller shrinks an over-large guess.
    const S floor = S(1e-8) * std::max(S(1), S(abs(t1 - t)));
    return std::min(std::max(std::min(S(100) * h0, h1), floor), S(abs(t1 - t)));
  }

  // Locates sign changes inside the step just accepted. Returns true when a
  // terminal event fires; t_stop then holds its time.
  bool scan_events(BasicTrajectory<S>& tr, const BasicDenseSegment<S>& seg, std::vector<S>& prev,
                   const VecS& y_end, S& t_stop) {
    const int m = std::max(1, opt_.event_subdivisions);
    S best_t = S(0);
    bool terminal = false;
    std::vector<BasicEventHit<S>> hits;
    for (std::size_t k = 0; k < opt_.events.size(); ++k) {
      const auto& ev = opt_.events[k];
      S ta = seg.t_start, ga = prev[k];
      for (int s = 1; s <= m; ++s) {
        const S tb = s == m ? seg.t_end() : seg.t_start + seg.h * S(s) / S(m);
        const S gb = s == m ? ev.fn(y_end) : ev.fn(seg.eval(tb));
        const bool up = ga < S(0) && gb >= S(0);
        const bool down = ga > S(0) && gb <= S(0);
        const int want = seg.h > S(0) ? ev.direction : -ev.direction;
        if ((up && want >= 0) || (down && want <= 0)) {
          auto g = [&](double tt) { return double(ev.fn(seg.eval(S(tt)))); };
          const RootResult rr = polish_root(g, double(ta), double(tb), double(ga), double(gb), {0.0, 1e-12, 60});
          const S tr_t = S(rr.x);
          hits.push_back({tr_t, seg.eval(tr_t), k});
          if (ev.terminal) {
            if (!terminal || (seg.h > S(0) ? tr_t < best_t : tr_t > best_t)) best_t = tr_t;
            terminal = true;
            break;
          }
        }
        ta = tb;
        ga = gb;
      }
      prev[k] = ev.fn(y_end);
    }
    std::sort(hits.begin(), hits.end(),
              [&](const auto& a, const auto& b) { return seg.h > S(0) ? a.t < b.t : a.t > b.t; });
    for (auto& hit : hits) {
      if (terminal && (seg.h > S(0) ? hit.t > best_t : hit.t < best_t)) continue;
      tr.events_.push_back(std::move(hit));
    }
    if (terminal) t_stop = best_t;
    return terminal;
  }
};

template <class S>
BasicTrajectory<S> integrate(const BasicVectorField<S>& field, const VecT<S>& start, S t0, S t1,
                             const BasicIntegrateOptions<S>& opt) {
  Integrator<const BasicVectorField<S>&, S> integ(field, opt);
  return integ.run(start, t0, t1);
}

template <class S>
BasicTrajectory<S> integrate(const BasicVectorField<S>& field, const VecT<S>& start, S t0, S t1, Tolerance tol) {
  BasicIntegrateOptions<S> opt;
  opt.tol = tol;
  return integrate(field, start, t0, t1, opt);
}

inline Trajectory integrate(const VectorField& field, const Vec& start, double t0, double t1) {
  return integrate(field, start, t0, t1, IntegrateOptions{});
}

struct QuadratureRun {
  Trajectory trajectory;  // states without the accumulator coordinate
  double value = 0.0;
  double error = 0.0;
};

/// Integrates the field while accumulating m' = integrand(state, t) with
/// m(t0) = 0. The value is m(t1), signed along the direction of integration;
/// the error is the sum of the controller's local-error estimates on m.
inline QuadratureRun integrate_with_quadrature(const VectorField& field, const Vec& start, double t0, double t1,
                                               const std::function<double(const Vec&, double)>& integrand,
                                               IntegrateOptions opt = {}) {
  const Eigen::Index n = start.size();
  auto aug = [&](const Vec& z, double t) {
    Vec out(n + 1);
    const Vec x = z.head(n);
    out.head(n) = field(x, t);
    out[n] = integrand(x, t);
    return out;
  };
  Vec z(n + 1);
  z.head(n) = start;
  z[n] = 0.0;
  opt.accumulator = n;
  std::vector<EventSpec> lifted;
  for (const auto& e : opt.events) {
    lifted.push_back({[fn = e.fn, n](const Vec& s) { return fn(s.head(n)); }, e.direction, e.terminal});
  }
  opt.events = std::move(lifted);
  Integrator<decltype(aug)> integ(aug, opt);
  const Trajectory full = integ.run(z, t0, t1);

  QuadratureRun out;
  out.value = full.final_state()[n];
  out.error = integ.accumulator_error();
  out.trajectory = full.head(n);
  return out;
}

inline QuadratureRun integrate_with_quadrature(const VectorField& field, const Vec& start, double t0, double t1,
                                               const std::function<double(const Vec&, double)>& integrand,
                                               Tolerance tol) {
  IntegrateOptions opt;
  opt.tol = tol;
  opt.dense = false;
  return integrate_with_quadrature(field, start, t0, t1, integrand, opt);
}

/// Every sign change of spec.fn along a stored trajectory, polished on the
/// dense interpolant by bisection and secant steps.
inline std::vector<EventHit> detect_events(const Trajectory& traj, const EventSpec& spec, int subdivisions = 8) {
  std::vector<EventHit> out;
  if (traj.size() < 2) return out;
  const auto& ts = traj.times();
  double ta = ts.front();
  double ga = spec.fn(traj.at(ta));
  for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
    const double t0 = ts[i], t1 = ts[i + 1];
    for (int s = 1; s <= subdivisions; ++s) {
      const double tb = s == subdivisions ? t1 : t0 + (t1 - t0) * static_cast<double>(s) / subdivisions;
      const double gb = spec.fn(traj.at(tb));
      const bool up = ga < 0.0 && gb >= 0.0;
      const bool down = ga > 0.0 && gb <= 0.0;
      if ((up && spec.direction >= 0) || (down && spec.direction <= 0)) {
        auto g = [&](double tt) { return spec.fn(traj.at(tt)); };
        const RootResult rr = polish_root(g, ta, tb, ga, gb, {0.0, 1e-12, 60});
        if (out.empty() || std::abs(out.back().t - rr.x) > 1e-12 * std::max(1.0, std::abs(rr.x))) {
          out.push_back({rr.x, traj.at(rr.x), 0});
        }
      }
      ta = tb;
      ga = gb;
    }
  }
  return out;
}

}  // namespace melnikov
