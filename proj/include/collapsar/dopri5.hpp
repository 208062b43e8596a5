#pragma once

// Dormand-Prince 5(4) embedded pair with the continuous extension of Hairer, Norsett & Wanner
// (Solving ODEs I, contd5). Fixed-size states, no allocation per step.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

namespace collapsar::rk {

template <std::size_t N>
using Vec = std::array<double, N>;

namespace dp {
inline constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
inline constexpr double a21 = 1.0 / 5.0;
inline constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
inline constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
inline constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                        a54 = -212.0 / 729.0;
inline constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                        a65 = -5103.0 / 18656.0;
inline constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0, a75 = -2187.0 / 6784.0,
                        a76 = 11.0 / 84.0;
inline constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                        e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
inline constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;
}  // namespace dp

/// Quartic interpolant over one accepted step.
template <std::size_t N>
struct DenseSegment {
  double x0 = 0.0;
  double h = 0.0;
  std::array<Vec<N>, 5> r{};

  Vec<N> operator()(double x) const {
    const double theta = (x - x0) / h;
    const double theta1 = 1.0 - theta;
    Vec<N> out;
    for (std::size_t i = 0; i < N; ++i) {
      out[i] = r[0][i] + theta * (r[1][i] + theta1 * (r[2][i] + theta * (r[3][i] + theta1 * r[4][i])));
    }
    return out;
  }
};

template <std::size_t N>
struct StepAttempt {
  Vec<N> y1{};
  Vec<N> k7{};  // derivative at the new point (first-same-as-last)
  double err = 0.0;
  DenseSegment<N> dense;
};

/// One trial step from (x, y) with slope k1. f(x, y) -> Vec<N> may throw; the caller decides what a
/// throw means.
template <std::size_t N, class F>
StepAttempt<N> dopri5_attempt(F&& f, double x, const Vec<N>& y, const Vec<N>& k1, double h, double rtol,
                              double atol) {
  using namespace dp;
  Vec<N> tmp;
  auto combo = [&](auto&&... terms) {
    for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * (0.0 + ... + (terms.first * terms.second[i]));
    return tmp;
  };
  auto p = [](double c, const Vec<N>& k) { return std::pair<double, const Vec<N>&>(c, k); };

  const Vec<N> k2 = f(x + c2 * h, combo(p(a21, k1)));
  const Vec<N> k3 = f(x + c3 * h, combo(p(a31, k1), p(a32, k2)));
  const Vec<N> k4 = f(x + c4 * h, combo(p(a41, k1), p(a42, k2), p(a43, k3)));
  const Vec<N> k5 = f(x + c5 * h, combo(p(a51, k1), p(a52, k2), p(a53, k3), p(a54, k4)));
  const Vec<N> k6 = f(x + h, combo(p(a61, k1), p(a62, k2), p(a63, k3), p(a64, k4), p(a65, k5)));
  StepAttempt<N> out;
  out.y1 = combo(p(a71, k1), p(a73, k3), p(a74, k4), p(a75, k5), p(a76, k6));
  out.k7 = f(x + h, out.y1);

  double sum = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * out.k7[i]);
    const double sc = atol + rtol * std::max(std::abs(y[i]), std::abs(out.y1[i]));
    sum += (e / sc) * (e / sc);
  }
  out.err = std::sqrt(sum / static_cast<double>(N));

  auto& d = out.dense;
  d.x0 = x;
  d.h = h;
  for (std::size_t i = 0; i < N; ++i) {
    const double ydiff = out.y1[i] - y[i];
    const double bspl = h * k1[i] - ydiff;
    d.r[0][i] = y[i];
    d.r[1][i] = ydiff;
    d.r[2][i] = bspl;
    d.r[3][i] = ydiff - h * out.k7[i] - bspl;
    d.r[4][i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * out.k7[i]);
  }
  return out;
}

/// Step-size factor for an error norm (order 5 controller with safety 0.9).
inline double step_factor(double err) {
  if (err <= 0.0 || !std::isfinite(err)) return err <= 0.0 ? 5.0 : 0.2;
  return std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
}

/// Classical fourth-order Runge-Kutta step.
template <std::size_t N, class F>
Vec<N> rk4_step(F&& f, double x, const Vec<N>& y, double h) {
  Vec<N> tmp;
  const Vec<N> k1 = f(x, y);
  for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
  const Vec<N> k2 = f(x + 0.5 * h, tmp);
  for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
  const Vec<N> k3 = f(x + 0.5 * h, tmp);
  for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * k3[i];
  const Vec<N> k4 = f(x + h, tmp);
  Vec<N> out;
  for (std::size_t i = 0; i < N; ++i) out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return out;
}

}  // namespace collapsar::rk
