#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace melnikov {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Failure categories surfaced through the library. The CLI maps them onto
/// exit statuses.
enum class ErrorKind {
  invalid_argument,
  step_underflow,
  blow_up,
  no_convergence,
  no_crossing,
  rejected,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

/// Reduces an angle to [0, period).
inline double reduce_periodic(double x, double period) {
  double r = std::fmod(x, period);
  if (r < 0.0) r += period;
  if (r >= period) r -= period;
  return r;
}

/// Signed angular difference reduced to [-period/2, period/2).
inline double wrap_difference(double d, double period = kTwoPi) {
  return reduce_periodic(d + 0.5 * period, period) - 0.5 * period;
}

inline Vec make_vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

}  // namespace melnikov
