#pragma once

#include "melnikov/common.hpp"
#include "melnikov/melnikov.hpp"
#include "melnikov/models.hpp"
#include "melnikov/roots.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <thread>
#include <vector>

namespace melnikov {

struct ScanResult {
  std::vector<double> phases;
  std::vector<MelnikovEvaluation> values;
  double family_parameter = 0.0;
  double tol = 0.0;
  TruncationPolicy policy;
  bool converged = true;
  std::vector<std::string> failures;  // "node k: reason"

  /// Node evaluated without an exception and with a finite value.
  bool usable(std::size_t k) const { return std::isfinite(values[k].value); }
  double max_abs() const {
    double m = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (usable(k)) m = std::max(m, std::abs(values[k].value));
    }
    return m;
  }
};

enum class ZeroMethod { bisection_newton, newton, bisection_secant };

inline const char* to_string(ZeroMethod m) {
  switch (m) {
    case ZeroMethod::bisection_newton: return "bisection+newton";
    case ZeroMethod::newton: return "newton";
    case ZeroMethod::bisection_secant: return "bisection+secant";
  }
  return "?";
}

struct ZeroCertificate {
  double phase = 0.0;
  double residual = 0.0;
  double residual_error = 0.0;
  double derivative = 0.0;
  double derivative_error = 0.0;
  double margin = 0.0;
  ZeroMethod method = ZeroMethod::bisection_newton;
  double bracket_lo = 0.0, bracket_hi = 0.0;
  double value_lo = 0.0, value_hi = 0.0;  // M at the final bracket ends
};

struct ZeroSearch {
  std::vector<ZeroCertificate> certificates;
  std::vector<std::string> notes;  // uncertified candidates with the reason
};

namespace detail {

inline MelnikovEvaluation safe_eval(const HomoclinicFamily& family, const SystemDef& sys, double phase,
                                    const TruncationPolicy& pol, double tol) {
  try {
    return melnikov_autonomous(family(phase), sys, pol, tol);
  } catch (const std::exception& e) {
    MelnikovEvaluation ev;
    ev.value = std::numeric_limits<double>::quiet_NaN();
    ev.error = std::numeric_limits<double>::infinity();
    ev.converged = false;
    ev.warnings.push_back(e.what());
    return ev;
  }
}

}  // namespace detail

/// M at N equispaced phases in [0, 2 pi). Nodes run on worker threads; the
/// result is assembled in grid order.
inline ScanResult scan(const HomoclinicFamily& family, const SystemDef& sys, double family_parameter, int N,
                       double tol, const TruncationPolicy& pol = {}, unsigned threads = 0) {
  if (N < 8) fail(ErrorKind::invalid_argument, "scan: N must be at least 8");
  if (!(tol > 0.0)) fail(ErrorKind::invalid_argument, "scan: tol must be positive");
  ScanResult out;
  out.family_parameter = family_parameter;
  out.tol = tol;
  out.policy = pol;
  out.phases.resize(static_cast<std::size_t>(N));
  out.values.resize(static_cast<std::size_t>(N));
  for (int k = 0; k < N; ++k) out.phases[static_cast<std::size_t>(k)] = kTwoPi * k / N;

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(N));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int k = next++; k < N; k = next++) {
      const auto i = static_cast<std::size_t>(k);
      out.values[i] = detail::safe_eval(family, sys, out.phases[i], pol, tol);
    }
  };
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (std::size_t k = 0; k < out.values.size(); ++k) {
    const auto& ev = out.values[k];
    if (!ev.converged || !out.usable(k)) {
      out.converged = false;
      out.failures.push_back("node " + std::to_string(k) + ": " +
                             (ev.warnings.empty() ? std::string("unconverged") : ev.warnings.back()));
    }
  }
  return out;
}

inline ScanResult scan(const Model& model, int N, double tol, const TruncationPolicy& pol = {}, unsigned threads = 0) {
  return scan(model.family, model.sys, model.family_parameter, N, tol, pol, threads);
}

/// Brackets sign changes of the scan (wrapping around 2 pi), refines them and
/// certifies those whose derivative clears three times the noise floor.
inline ZeroSearch find_zeros(const ScanResult& sc, const HomoclinicFamily& family, const SystemDef& sys, double tol) {
  ZeroSearch out;
  const std::size_t N = sc.phases.size();
  if (N < 2) return out;
  const double h = kTwoPi / static_cast<double>(N);
  const bool absolute = classify_convergence(family(0.0), sys).absolute();
  auto M = [&](double phi) { return detail::safe_eval(family, sys, phi, sc.policy, tol); };

  struct Bracket {
    double a, b;
    double fa, fb;
  };
  std::vector<Bracket> brackets;
  auto val = [&](std::size_t k) { return sc.values[k].value; };
  for (std::size_t k = 0; k < N; ++k) {
    const std::size_t k1 = (k + 1) % N;
    const double a = sc.phases[k];
    const double b = k1 == 0 ? kTwoPi : sc.phases[k1];
    if (!sc.usable(k) || !sc.usable(k1)) {
      // A failed node can hide a zero; report its neighbourhood once.
      if (!sc.usable(k1)) {
        out.notes.push_back("phase " + std::to_string(b) + ": evaluation failed, neighbourhood not certified");
      }
      continue;
    }
    const double fa = val(k), fb = val(k1);
    if (fa == 0.0) {
      const std::size_t km = (k + N - 1) % N;
      if (sc.usable(km) && val(km) * fb < 0.0) {
        // Exact zero at a node: bracket it with the neighbours.
        const double am = k == 0 ? -h : sc.phases[km];
        brackets.push_back({am, b, val(km), fb});
      } else {
        out.notes.push_back("phase " + std::to_string(a) + ": zero value without sign change, possible tangency, not certified");
      }
      continue;
    }
    if (fb == 0.0) continue;  // handled when k1 is the left node
    if (fa * fb < 0.0) brackets.push_back({a, b, fa, fb});
  }
  // Grid minima below the noise with no bracket.
  for (std::size_t k = 0; k < N; ++k) {
    if (!sc.usable(k) || val(k) == 0.0) continue;
    const std::size_t km = (k + N - 1) % N, kp = (k + 1) % N;
    const double v = std::abs(val(k));
    if (v > std::max(tol, 3.0 * sc.values[k].error)) continue;
    const bool signed_change = (sc.usable(km) && val(km) * val(k) <= 0.0) || (sc.usable(kp) && val(kp) * val(k) <= 0.0);
    if (!signed_change) {
      out.notes.push_back("phase " + std::to_string(sc.phases[k]) + ": |M| below tol without sign change, possible tangency, not certified");
    }
  }

  for (const Bracket& br : brackets) {
    double a = br.a, b = br.b, fa = br.fa, fb = br.fb;
    bool failed = false;
    std::string why;
    std::map<double, double> seen{{a, fa}, {b, fb}};
    auto f = [&](double x) {
      if (failed) return fa;  // keep the bracket still until the loop ends
      const MelnikovEvaluation ev = M(x);
      if (!std::isfinite(ev.value)) {
        failed = true;
        why = ev.warnings.empty() ? "non-finite value" : ev.warnings.back();
        return fa;
      }
      seen[x] = ev.value;
      return ev.value;
    };
    // Bracketing phase to a width the Newton step can finish from.
    const RootResult rr = polish_root(f, a, b, fa, fb, {absolute ? 1e-6 : 1e-10, std::numeric_limits<double>::infinity(), 80});
    if (failed) {
      out.notes.push_back("bracket [" + std::to_string(br.a) + ", " + std::to_string(br.b) + "]: " + why + ", not certified");
      continue;
    }
    a = rr.a;
    b = rr.b;
    fa = seen.count(a) ? seen[a] : 0.0;
    fb = seen.count(b) ? seen[b] : 0.0;
    double x = rr.x;

    ZeroCertificate c;
    MelnikovEvaluation d;
    if (absolute) {
      c.method = ZeroMethod::bisection_newton;
      for (int it = 0; it < 4; ++it) {
        const MelnikovEvaluation mv = M(x);
        d = melnikov_derivative(family, sys, x, tol);
        if (!std::isfinite(mv.value) || d.value == 0.0) break;
        const double step = mv.value / d.value;
        const double xn = x - step;
        if (xn < a || xn > b) break;
        x = xn;
        if (std::abs(step) <= 1e-14 * std::max(1.0, std::abs(x))) break;
      }
      d = melnikov_derivative(family, sys, x, tol);
      c.derivative = d.value;
      c.derivative_error = d.error;
    } else {
      // Secant slope over a symmetric stencil; the error includes the
      // stencil's own evaluation noise.
      c.method = ZeroMethod::bisection_secant;
      const double s = std::max(1e-3, 4.0 * (b - a));
      const MelnikovEvaluation mp = M(x + s), mm = M(x - s);
      c.derivative = (mp.value - mm.value) / (2.0 * s);
      c.derivative_error = (mp.error + mm.error) / (2.0 * s) +
                           std::abs(mp.value + mm.value) / (2.0 * s);  // curvature term
    }
    const MelnikovEvaluation mz = M(x);
    if (!std::isfinite(mz.value) || !std::isfinite(c.derivative)) {
      out.notes.push_back("phase " + std::to_string(x) + ": evaluation failed at the refined point, not certified");
      continue;
    }
    c.phase = reduce_periodic(x, kTwoPi);
    c.residual = std::abs(mz.value);
    c.residual_error = mz.error;
    c.bracket_lo = a;
    c.bracket_hi = b;
    c.value_lo = fa;
    c.value_hi = fb;
    c.margin = std::abs(c.derivative) - 3.0 * (mz.error + c.derivative_error);
    // A sign change through a pole leaves a large residual; not a zero.
    const bool small = c.residual <= std::max(3.0 * mz.error, tol) + std::abs(c.derivative) * (b - a);
    if (!small) {
      out.notes.push_back("phase " + std::to_string(c.phase) + ": sign change without a small residual (singularity?), not certified");
      continue;
    }
    if (c.margin <= 0.0) {
      out.notes.push_back("phase " + std::to_string(c.phase) + ": nondegeneracy margin not positive, not certified");
      continue;
    }
    out.certificates.push_back(c);
  }
  std::sort(out.certificates.begin(), out.certificates.end(),
            [](const ZeroCertificate& l, const ZeroCertificate& r) { return l.phase < r.phase; });
  return out;
}

inline ZeroSearch find_zeros(const ScanResult& sc, const Model& model, double tol) {
  return find_zeros(sc, model.family, model.sys, tol);
}

struct MarginRow {
  double phase, residual, derivative, margin;
};

struct MarginSummary {
  std::vector<MarginRow> rows;
  double min_margin = std::numeric_limits<double>::infinity();
  double min_abs_away = std::numeric_limits<double>::infinity();  // over nodes farther than h/2 from every zero
  double max_abs = 0.0;
};

inline MarginSummary margin_report(const std::vector<ZeroCertificate>& certs, const ScanResult& sc) {
  MarginSummary out;
  out.max_abs = sc.max_abs();
  for (const auto& c : certs) {
    out.rows.push_back({c.phase, c.residual, c.derivative, c.margin});
    out.min_margin = std::min(out.min_margin, c.margin);
  }
  if (certs.empty()) return out;
  const double h = sc.phases.empty() ? kTwoPi : kTwoPi / static_cast<double>(sc.phases.size());
  for (std::size_t k = 0; k < sc.phases.size(); ++k) {
    if (!sc.usable(k)) continue;
    bool near = false;
    for (const auto& c : certs) near = near || std::abs(wrap_difference(sc.phases[k] - c.phase)) < 0.5 * h;
    if (!near) out.min_abs_away = std::min(out.min_abs_away, std::abs(sc.values[k].value));
  }
  return out;
}

}  // namespace melnikov
