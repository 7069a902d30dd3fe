#include "melnikov/odeint.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace melnikov;

namespace {

VectorField oscillator() {
  return {[](const Vec& x, double) { return make_vec({x[1], -x[0]}); }, true};
}

}  // namespace

TEST(Odeint, HarmonicOscillatorForward) {
  const auto tr = integrate(oscillator(), make_vec({1.0, 0.0}), 0.0, 10.0, Tolerance{1e-13, 1e-13});
  EXPECT_NEAR(tr.final_state()[0], std::cos(10.0), 1e-10);
  EXPECT_NEAR(tr.final_state()[1], -std::sin(10.0), 1e-10);
}

TEST(Odeint, BackwardIntegrationIsStoredInIncreasingTime) {
  const auto tr = integrate(oscillator(), make_vec({1.0, 0.0}), 0.0, -3.0, Tolerance{1e-13, 1e-13});
  EXPECT_EQ(tr.direction(), -1);
  EXPECT_LT(tr.t_min(), tr.t_max());
  EXPECT_DOUBLE_EQ(tr.t_final(), -3.0);
  EXPECT_NEAR(tr.final_state()[0], std::cos(3.0), 1e-10);
  EXPECT_NEAR(tr.final_state()[1], std::sin(3.0), 1e-10);
}

TEST(Odeint, DenseOutputBetweenSteps) {
  const auto tr = integrate(oscillator(), make_vec({1.0, 0.0}), 0.0, 6.0, Tolerance{1e-12, 1e-12});
  for (double t = 0.05; t < 6.0; t += 0.37) {
    EXPECT_NEAR(tr.at(t)[0], std::cos(t), 1e-8) << t;
  }
}

TEST(Odeint, TerminalEventLocated) {
  IntegrateOptions opt;
  opt.tol = {1e-13, 1e-13};
  opt.events = {{[](const Vec& x) { return x[0]; }, -1, true}};
  const auto tr = integrate(oscillator(), make_vec({1.0, 0.0}), 0.0, 10.0, opt);
  ASSERT_TRUE(tr.stopped_by_event());
  ASSERT_EQ(tr.events().size(), 1u);
  EXPECT_NEAR(tr.events()[0].t, 0.5 * kPi, 1e-10);
}

TEST(Odeint, DetectEventsFindsEveryCrossing) {
  const auto tr = integrate(oscillator(), make_vec({1.0, 0.0}), 0.0, 10.0, Tolerance{1e-12, 1e-12});
  const auto hits = detect_events(tr, {[](const Vec& x) { return x[0]; }, 0, false});
  ASSERT_EQ(hits.size(), 3u);
  for (std::size_t k = 0; k < hits.size(); ++k) EXPECT_NEAR(hits[k].t, (k + 0.5) * kPi, 1e-9);
}

TEST(Odeint, QuadratureMatchesOracle) {
  // int_0^5 x(t)^2 e^{-t/3} dt along x = cos t.
  auto g = [](const Vec& x, double t) { return x[0] * x[0] * std::exp(-t / 3.0); };
  const auto q = integrate_with_quadrature(oscillator(), make_vec({1.0, 0.0}), 0.0, 5.0, g, Tolerance{1e-13, 1e-13});
  const double ref = oracle::gk([](double t) { return std::cos(t) * std::cos(t) * std::exp(-t / 3.0); }, 0.0, 5.0);
  EXPECT_NEAR(q.value, ref, 1e-10);
  EXPECT_LT(q.error, 1e-8);
}

TEST(Odeint, LongDoubleDuffingSeparatrix) {
  // Rounding on the separatrix grows like e^t, so t = 20 needs extended precision.
  using LD = long double;
  BasicVectorField<LD> f{[](const VecT<LD>& z, LD) {
                           VecT<LD> o(2);
                           o << z[1], z[0] - z[0] * z[0];
                           return o;
                         },
                         true};
  VecT<LD> s(2);
  s << 1.5L, 0.0L;
  const auto tr = integrate<LD>(f, s, 0.0L, 20.0L, Tolerance{1e-30, 1e-17});
  const LD ex = 1.5L / std::pow(std::cosh(10.0L), 2);
  EXPECT_LT(std::abs(static_cast<double>(tr.final_state()[0] - ex)), 1e-8);
}

TEST(Odeint, BlowUpThrows) {
  VectorField f{[](const Vec& x, double) { return make_vec({x[0] * x[0]}); }, true};
  try {
    integrate(f, make_vec({1.0}), 0.0, 2.0);
    FAIL() << "expected IntegrationError";
  } catch (const IntegrationError& e) {
    EXPECT_LT(e.t_last(), 1.0 + 1e-6);
    EXPECT_GT(e.t_last(), 0.9);
  }
}
