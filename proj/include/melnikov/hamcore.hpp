#pragma once

#include "melnikov/common.hpp"
#include "melnikov/fields.hpp"
#include "melnikov/odeint.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace melnikov {

struct ChartCoord {
  std::string name;
  std::optional<double> period;  // set for angular coordinates
};

struct Chart {
  std::string id;
  std::vector<ChartCoord> coords;

  Eigen::Index dimension() const { return static_cast<Eigen::Index>(coords.size()); }
};

struct PhasePoint {
  Vec coords;
  std::string chart_id;
};

/// Reports a state with periodic coordinates reduced to [0, period).
inline PhasePoint make_point(const Chart& chart, const Vec& x) {
  if (x.size() != chart.dimension()) fail(ErrorKind::invalid_argument, "point dimension does not match chart " + chart.id);
  PhasePoint p{x, chart.id};
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (const auto& per = chart.coords[static_cast<std::size_t>(i)].period) p.coords[i] = reduce_periodic(x[i], *per);
  }
  return p;
}

/// Conjugate coordinate pair: (position index, momentum index).
using ConjugatePair = std::pair<Eigen::Index, Eigen::Index>;

/// Default ordering: positions q_1..q_n first, momenta p_1..p_n second.
inline std::vector<ConjugatePair> positions_first(Eigen::Index dim) {
  if (dim % 2 != 0) fail(ErrorKind::rejected, "canonical structure needs an even dimension");
  std::vector<ConjugatePair> pairs;
  for (Eigen::Index i = 0; i < dim / 2; ++i) pairs.emplace_back(i, i + dim / 2);
  return pairs;
}

/// Hamiltonian vector field: dq/dt = dH/dp, dp/dt = -dH/dq for every pair.
inline VectorField canonical_field(const ScalarField& H, const std::vector<ConjugatePair>& pairs, Eigen::Index dim) {
  if (dim % 2 != 0) fail(ErrorKind::rejected, "canonical_field: odd dimension");
  if (static_cast<Eigen::Index>(pairs.size()) * 2 != dim) fail(ErrorKind::rejected, "canonical_field: pairs do not cover the chart");
  return {[H, pairs, dim](const Vec& x, double) {
            if (x.size() != dim) fail(ErrorKind::invalid_argument, "canonical_field: dimension mismatch");
            const Vec g = H.gradient(x);
            Vec v(dim);
            for (const auto& [q, p] : pairs) {
              v[q] = g[p];
              v[p] = -g[q];
            }
            return v;
          },
          true};
}

inline VectorField canonical_field(const ScalarField& H, Eigen::Index dim) {
  if (dim % 2 != 0) fail(ErrorKind::rejected, "canonical_field: odd dimension");
  return canonical_field(H, positions_first(dim), dim);
}

/// A perturbed system X0 + eps*Y with Hamiltonians H0, H1 and the second
/// integral F. Periodic-forcing systems are planar and set forcing_period.
struct SystemDef {
  int dimension = 0;
  Chart chart;
  VectorField X0;
  VectorField Y;
  ScalarField H0;
  std::optional<ScalarField> H1;
  ScalarField F;
  bool symplectic = false;
  std::vector<ConjugatePair> pairs;
  std::optional<double> forcing_period;
  /// Replaces DF.Y when the perturbation is only known through its integrand.
  std::function<double(const Vec&, double)> integrand_override;
  /// Analytic derivative of the integrand with respect to the family phase.
  std::function<double(const Vec&, double)> integrand_phase_derivative;

  VectorField perturbed(double eps) const {
    return {[X0 = X0, Y = Y, eps](const Vec& x, double t) { return (X0(x, t) + eps * Y(x, t)).eval(); },
            X0.autonomous && Y.autonomous};
  }

  double perturbed_energy(const Vec& x, double eps) const {
    return H0(x) + (H1 ? eps * (*H1)(x) : 0.0);
  }
};

/// Integrand of the autonomous Melnikov function, DF.Y, or of the periodic
/// one, DH.Y, when the system carries a forcing period.
inline double melnikov_integrand(const SystemDef& sys, const Vec& x, double t) {
  if (sys.integrand_override) return sys.integrand_override(x, t);
  const Vec y = sys.Y(x, t);
  const Vec g = sys.forcing_period ? sys.H0.gradient(x) : sys.F.gradient(x);
  return g.dot(y);
}

/// Largest deviation of a scalar along stored trajectory samples.
inline double integral_drift(const Trajectory& traj, const ScalarField& field) {
  if (traj.empty()) fail(ErrorKind::rejected, "integral_drift: empty trajectory");
  const double f0 = field(traj.initial_state());
  double worst = 0.0;
  for (const auto& s : traj.states()) worst = std::max(worst, std::abs(field(s) - f0));
  return worst;
}

/// Copy with the perturbation multiplied by c.
inline SystemDef scale_perturbation(const SystemDef& sys, double c) {
  SystemDef out = sys;
  out.Y = {[Y = sys.Y, c](const Vec& x, double t) { return (c * Y(x, t)).eval(); }, sys.Y.autonomous};
  if (sys.H1) {
    const ScalarField h = *sys.H1;
    ScalarField s;
    s.value = [h, c](const Vec& x) { return c * h(x); };
    if (h.has_closed_gradient()) s.closed_gradient = [h, c](const Vec& x) { return (c * h.gradient(x)).eval(); };
    out.H1 = s;
  }
  if (sys.integrand_override) {
    out.integrand_override = [g = sys.integrand_override, c](const Vec& x, double t) { return c * g(x, t); };
  }
  if (sys.integrand_phase_derivative) {
    out.integrand_phase_derivative = [g = sys.integrand_phase_derivative, c](const Vec& x, double t) {
      return c * g(x, t);
    };
  }
  return out;
}

/// Diffeomorphism between charts with its inverse and Jacobian.
struct ChartMap {
  Chart target;
  std::function<Vec(const Vec&)> forward;
  std::function<Vec(const Vec&)> inverse;
  std::function<Mat(const Vec&)> jacobian;  // of forward
};

/// The same system written in the target chart: fields are pushed forward,
/// scalars pulled back. The result is flagged non-symplectic.
inline SystemDef transform_system(const SystemDef& sys, const ChartMap& map) {
  SystemDef out = sys;
  out.chart = map.target;
  out.symplectic = false;
  out.pairs.clear();
  auto push = [map](const VectorField& f) {
    return VectorField{[f, map](const Vec& u, double t) {
                         const Vec x = map.inverse(u);
                         return (map.jacobian(x) * f(x, t)).eval();
                       },
                       f.autonomous};
  };
  auto pull = [map](const ScalarField& g) {
    ScalarField s;
    s.value = [g, map](const Vec& u) { return g(map.inverse(u)); };
    if (g.has_closed_gradient()) {
      // dG~ = dG * (D phi)^{-1}
      s.closed_gradient = [g, map](const Vec& u) {
        const Vec x = map.inverse(u);
        const Mat J = map.jacobian(x);
        return Vec(J.transpose().fullPivLu().solve(g.gradient(x)));
      };
    }
    return s;
  };
  out.X0 = push(sys.X0);
  out.Y = push(sys.Y);
  out.H0 = pull(sys.H0);
  if (sys.H1) out.H1 = pull(*sys.H1);
  if (sys.F) out.F = pull(sys.F);
  if (sys.integrand_override) {
    out.integrand_override = [g = sys.integrand_override, map](const Vec& u, double t) { return g(map.inverse(u), t); };
  }
  if (sys.integrand_phase_derivative) {
    out.integrand_phase_derivative = [g = sys.integrand_phase_derivative, map](const Vec& u, double t) {
      return g(map.inverse(u), t);
    };
  }
  return out;
}

/// Affine plane through base_point spanned by the columns of `directions`.
struct Transversal {
  PhasePoint base_point;
  Mat directions;
  int codimension = 2;

  /// Orthonormal basis of the complement of the spanning directions.
  Mat normals() const {
    const Eigen::Index n = directions.rows();
    Eigen::HouseholderQR<Mat> qr(directions);
    const Mat Q = qr.householderQ() * Mat::Identity(n, n);
    return Q.rightCols(n - directions.cols());
  }

  /// Rank test of [directions | tangents]: true when the plane is transverse.
  bool transverse_to(const Mat& tangents, double rtol = 1e-8) const {
    Mat A(directions.rows(), directions.cols() + tangents.cols());
    A << directions, tangents;
    Eigen::JacobiSVD<Mat> svd(A);
    const auto& s = svd.singularValues();
    return s.minCoeff() > rtol * s.maxCoeff() && A.cols() == A.rows();
  }
};

}  // namespace melnikov
