#include "melnikov/zerofind.hpp"

#include <gtest/gtest.h>

using namespace melnikov;

namespace {

ScanResult fabricated(const std::vector<double>& values) {
  ScanResult sc;
  const int N = static_cast<int>(values.size());
  for (int k = 0; k < N; ++k) {
    sc.phases.push_back(kTwoPi * k / N);
    MelnikovEvaluation ev;
    ev.value = values[static_cast<std::size_t>(k)];
    ev.error = 1e-14;
    sc.values.push_back(ev);
  }
  sc.tol = 1e-10;
  return sc;
}

bool has_zero_near(const ZeroSearch& zs, double phase, double tol) {
  for (const auto& c : zs.certificates) {
    if (std::abs(wrap_difference(c.phase - phase)) <= tol) return true;
  }
  return false;
}

}  // namespace

TEST(Zerofind, DuffingOscillatorZeros) {
  const Model m = make_duffing_oscillator(1.0, 0.5);
  const ScanResult sc = scan(m, 16, 1e-10);
  ASSERT_TRUE(sc.converged);
  const ZeroSearch zs = find_zeros(sc, m, 1e-10);
  ASSERT_EQ(zs.certificates.size(), 2u);
  EXPECT_TRUE(has_zero_near(zs, 0.0, 1e-8));
  EXPECT_TRUE(has_zero_near(zs, kPi, 1e-8));
  for (const auto& c : zs.certificates) {
    EXPECT_GT(c.margin, 0.0);
    EXPECT_EQ(c.method, ZeroMethod::bisection_newton);
  }
  const MarginSummary mr = margin_report(zs.certificates, sc);
  EXPECT_GE(mr.min_abs_away, 0.5 * mr.max_abs * std::sin(kPi / 16));
}

TEST(Zerofind, ZerosStableUnderRefinement) {
  const Model m = make_duffing_oscillator(0.5, 0.5);
  const ZeroSearch a = find_zeros(scan(m, 16, 1e-10), m, 1e-10);
  const ZeroSearch b = find_zeros(scan(m, 32, 1e-10), m, 1e-10);
  ASSERT_EQ(a.certificates.size(), b.certificates.size());
  for (const auto& c : a.certificates) EXPECT_TRUE(has_zero_near(b, c.phase, 1e-6)) << c.phase;
}

TEST(Zerofind, ZerosInvariantUnderScaling) {
  const Model m = make_duffing_oscillator(2.0, 0.5);
  const SystemDef s = scale_perturbation(m.sys, 7.5);
  const ZeroSearch a = find_zeros(scan(m, 16, 1e-10), m, 1e-10);
  const ZeroSearch b = find_zeros(scan(m.family, s, m.family_parameter, 16, 1e-10), m.family, s, 1e-10);
  ASSERT_EQ(a.certificates.size(), b.certificates.size());
  for (const auto& c : a.certificates) EXPECT_TRUE(has_zero_near(b, c.phase, 1e-8)) << c.phase;
}

TEST(Zerofind, ConstantSignHasNoZeros) {
  const Model m = make_duffing_oscillator(1.0, 0.5);
  std::vector<double> v;
  for (int k = 0; k < 16; ++k) v.push_back(1.0 + 0.5 * std::cos(kTwoPi * k / 16));
  const ZeroSearch zs = find_zeros(fabricated(v), m, 1e-10);
  EXPECT_TRUE(zs.certificates.empty());
  EXPECT_TRUE(zs.notes.empty());
}

TEST(Zerofind, TangencyIsNotCertified) {
  const Model m = make_duffing_oscillator(1.0, 0.5);
  std::vector<double> v;
  for (int k = 0; k < 16; ++k) v.push_back(1.0 - std::cos(kTwoPi * k / 16));
  const ZeroSearch zs = find_zeros(fabricated(v), m, 1e-10);
  EXPECT_TRUE(zs.certificates.empty());
  ASSERT_FALSE(zs.notes.empty());
  EXPECT_NE(zs.notes.front().find("tangency"), std::string::npos);
}

TEST(Zerofind, ScanRejectsCoarseGrid) {
  const Model m = make_duffing_oscillator(1.0, 0.5);
  EXPECT_THROW(scan(m, 4, 1e-8), Error);
}

TEST(Zerofind, RtbpSymmetricZeros) {
  const Model m = make_rtbp(3.0);
  const ScanResult sc = scan(m, 64, 1e-8);
  ASSERT_TRUE(sc.converged);
  const double mx = sc.max_abs();
  EXPECT_LE(std::abs(sc.values[0].value), 1e-4 * mx);
  EXPECT_LE(std::abs(sc.values[32].value), 1e-4 * mx);
  const ZeroSearch zs = find_zeros(sc, m, 1e-8);
  EXPECT_TRUE(has_zero_near(zs, 0.0, 1e-6));
  EXPECT_TRUE(has_zero_near(zs, kPi, 1e-6));
}

TEST(Zerofind, RtbpCollisionFlagged) {
  // rho0 = 2 puts the pericentre on the primary at s0 = pi.
  const Model m = make_rtbp(2.0);
  const ScanResult sc = scan(m, 16, 1e-8);
  EXPECT_FALSE(sc.converged);
  EXPECT_FALSE(sc.usable(8));
  const ZeroSearch zs = find_zeros(sc, m, 1e-8);
  EXPECT_FALSE(has_zero_near(zs, kPi, 1e-3));
}
