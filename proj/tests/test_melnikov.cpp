#include "melnikov/melnikov.hpp"
#include "melnikov/models.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace melnikov;

namespace {

double closed_form(double alpha, double g0, double th0) {
  const double A = std::sqrt(2.0 * g0 / alpha);
  return A * std::sin(th0) * (-6.0 * kPi * alpha * alpha / std::sinh(kPi * alpha));
}

}  // namespace

TEST(Melnikov, OracleConfirmsClosedForm) {
  for (double alpha : {0.5, 1.0, 2.0}) {
    for (double th : {0.3, 1.1, 2.5}) {
      const double ref = oracle::duffing_oscillator_M(alpha, 0.5, th);
      EXPECT_NEAR(ref, closed_form(alpha, 0.5, th), 1e-13 * std::max(1.0, std::abs(ref)));
    }
  }
}

TEST(Melnikov, DuffingOscillatorMatchesOracle) {
  const double alpha = 1.0;
  const Model m = make_duffing_oscillator(alpha, 0.5);
  for (double th : {0.0, 0.4, 1.3, 2.9, 4.4}) {
    const auto ev = melnikov_autonomous(m.family(th), m.sys, {}, 1e-11);
    EXPECT_TRUE(ev.converged);
    EXPECT_EQ(ev.convergence.kind, ConvergenceKind::absolute);
    EXPECT_NEAR(ev.value, oracle::duffing_oscillator_M(alpha, 0.5, th), 1e-9);
    EXPECT_LE(ev.error, 1e-9);
  }
}

TEST(Melnikov, LinearInPerturbationScale) {
  const Model m = make_duffing_oscillator(0.8, 0.5);
  const SystemDef s3 = scale_perturbation(m.sys, -3.0);
  const auto o = m.family(1.0);
  const double a = melnikov_autonomous(o, m.sys, {}, 1e-11).value;
  const double b = melnikov_autonomous(o, s3, {}, 1e-11).value;
  EXPECT_NEAR(b, -3.0 * a, 1e-9);
}

TEST(Melnikov, HolmesMarsdenIsConditional) {
  const Model m = make_holmes_marsden();
  const auto cls = classify_convergence(m.family(0.0), m.sys);
  EXPECT_EQ(cls.kind, ConvergenceKind::conditional);
  TruncationPolicy plain;
  plain.mode = TruncationMode::plain;
  EXPECT_THROW(melnikov_autonomous(m.family(0.0), m.sys, plain, 1e-8), Error);
}

TEST(Melnikov, HolmesMarsdenMatchedVersusMismatched) {
  const Model m = make_holmes_marsden();
  const auto o = m.family(0.0);
  TruncationPolicy pol;
  pol.mode = TruncationMode::matched;
  pol.j_min = 1;
  pol.j_max = 15;
  pol.stop_early = false;
  const auto matched = partial_integrals(o, m.sys, pol, 1e-10, false);
  pol.mismatched = true;
  const auto mism = partial_integrals(o, m.sys, pol, 1e-10, false);
  const double sm = spread_of(matched, 4), sx = spread_of(mism, 4);
  EXPECT_LT(sm, 1e-8);
  EXPECT_GT(sx, 10.0 * sm);
  EXPECT_GT(sx, 1.0);
}

TEST(Melnikov, HolmesMarsdenAnchorsAgree) {
  const Model m = make_holmes_marsden();
  const auto o = m.family(0.0);
  TruncationPolicy a;
  a.mode = TruncationMode::matched;
  TruncationPolicy b = a;
  b.anchor = 0.0;
  const auto ea = melnikov_autonomous(o, m.sys, a, 1e-10);
  const auto eb = melnikov_autonomous(o, m.sys, b, 1e-10);
  EXPECT_LE(std::abs(ea.value - eb.value), ea.error + eb.error + 1e-12);
}

TEST(Melnikov, HolmesMarsdenCosineDependence) {
  // The integrand is -cos(theta) along a loop whose phase shifts rigidly.
  const Model m = make_holmes_marsden();
  const double m0 = melnikov_autonomous(m.family(0.0), m.sys, {}, 1e-10).value;
  for (double th : {0.7, 2.0, kPi}) {
    const double v = melnikov_autonomous(m.family(th), m.sys, {}, 1e-10).value;
    EXPECT_NEAR(v, m0 * std::cos(th), 1e-8) << th;
  }
}

TEST(Melnikov, DerivativeRefusedWhenConditional) {
  const Model m = make_holmes_marsden();
  EXPECT_THROW(melnikov_derivative(m.family, m.sys, 0.3, 1e-8), Error);
}

TEST(Melnikov, DuffingDerivativeMatchesClosedForm) {
  const Model m = make_duffing_oscillator(1.0, 0.5);
  for (double th : {0.2, 1.7}) {
    const auto d = melnikov_derivative(m.family, m.sys, th, 1e-10);
    EXPECT_NEAR(d.value, closed_form(1.0, 0.5, th + 0.5 * kPi), 1e-7);
  }
}

TEST(Melnikov, RtbpIntegrandAtPericentre) {
  EXPECT_NEAR(detail::rtbp_integrand(make_vec({1.0, 0.0, 2.0, 0.5 * kPi})), 1.0 - std::pow(2.0, -1.5), 1e-15);
  EXPECT_EQ(detail::rtbp_integrand(make_vec({0.7, 0.0, 3.0, 0.0})), 0.0);
}

TEST(Melnikov, RtbpDerivativeMatchesDifferences) {
  const Model m = make_rtbp(3.0);
  const double phase = 1.0, h = 1e-4;
  const auto d = melnikov_derivative(m.family, m.sys, phase, 1e-9);
  const double p = melnikov_autonomous(m.family(phase + h), m.sys, {}, 1e-11).value;
  const double q = melnikov_autonomous(m.family(phase - h), m.sys, {}, 1e-11).value;
  EXPECT_NEAR(d.value, (p - q) / (2 * h), 1e-5 * std::abs(d.value));
}

TEST(Melnikov, RtbpTailBelowHalfTolerance) {
  const Model m = make_rtbp(3.0);
  const auto ev = melnikov_autonomous(m.family(1.0), m.sys, {}, 1e-8);
  EXPECT_TRUE(ev.converged);
  EXPECT_LE(ev.tail_bound, 0.5e-8);
}

TEST(Melnikov, RtbpOddInPhase) {
  // The parabolic family is reversible: M(-s0) = -M(s0).
  const Model m = make_rtbp(3.0);
  const double a = melnikov_autonomous(m.family(0.9), m.sys, {}, 1e-10).value;
  const double b = melnikov_autonomous(m.family(-0.9), m.sys, {}, 1e-10).value;
  EXPECT_NEAR(a, -b, 1e-8);
}

TEST(Melnikov, PeriodicFormsAgree) {
  const Model m = make_forced_duffing();
  const auto o = m.family(0.0);
  for (double tau : {0.0, 0.9, 2.2, 4.0}) {
    const auto c = melnikov_periodic(m.sys, o, tau, PeriodicForm::cross);
    const auto h = melnikov_periodic(m.sys, o, tau, PeriodicForm::hamiltonian);
    EXPECT_NEAR(c.value, h.value, 1e-12);
    EXPECT_NEAR(h.value, oracle::forced_duffing_M(tau), 1e-10);
  }
}

TEST(Melnikov, ShearedChartInvariance) {
  const Model m = make_forced_duffing();
  const ChartMap cm = cubic_shear_chart();
  const SystemDef s2 = transform_system(m.sys, cm);
  const auto o = m.family(0.0);
  const auto o2 = transform_orbit(o, cm);
  const double scale = melnikov_periodic(m.sys, o, 0.5 * kPi, PeriodicForm::hamiltonian).value;
  for (double tau : {0.3, 1.9, 3.5}) {
    const double a = melnikov_periodic(m.sys, o, tau, PeriodicForm::hamiltonian).value;
    const double b = melnikov_periodic(s2, o2, tau, PeriodicForm::hamiltonian).value;
    EXPECT_LE(std::abs(a - b), 1e-8 * std::abs(scale));
  }
  EXPECT_THROW(melnikov_periodic(s2, o2, 0.0, PeriodicForm::cross), Error);
}
