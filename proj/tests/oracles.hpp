#pragma once

// Reference values computed without the library: Boost quadrature in
// 50-digit arithmetic on closed-form orbits.

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>

namespace oracle {

using Real = boost::multiprecision::cpp_bin_float_50;

/// Example 1 Melnikov integrand -A z1'(t) cos(alpha t + theta0) with
/// z1 = 1.5 sech^2(t/2), integrated over [-L, L] by adaptive Gauss-Kronrod.
/// Beyond |t| = L = 90 the integrand is below 1e-37.
inline double duffing_oscillator_M(double alpha, double g0, double theta0) {
  const Real a = alpha, th = theta0;
  const Real A = boost::multiprecision::sqrt(Real(2) * g0 / a);
  auto f = [&](const Real& t) {
    const Real c = boost::multiprecision::cosh(t / 2);
    const Real z1dot = Real(-1.5) * boost::multiprecision::tanh(t / 2) / (c * c);
    return -A * z1dot * boost::multiprecision::cos(a * t + th);
  };
  Real err;
  const Real v = boost::math::quadrature::gauss_kronrod<Real, 61>::integrate(f, Real(-90), Real(90), 25, Real(1e-30), &err);
  return static_cast<double>(v);
}

/// Same integral for the planar forced Duffing: int z2(t) cos(t + tau0) dt.
inline double forced_duffing_M(double tau0) {
  const Real tau = tau0;
  auto f = [&](const Real& t) {
    const Real c = boost::multiprecision::cosh(t / 2);
    const Real z2 = Real(-1.5) * boost::multiprecision::tanh(t / 2) / (c * c);
    return z2 * boost::multiprecision::cos(t + tau);
  };
  Real err;
  return static_cast<double>(
      boost::math::quadrature::gauss_kronrod<Real, 61>::integrate(f, Real(-90), Real(90), 25, Real(1e-30), &err));
}

/// Plain double Gauss-Kronrod for generic smooth integrands.
template <class F>
double gk(F f, double a, double b) {
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 20, 1e-14, &err);
}

}  // namespace oracle
