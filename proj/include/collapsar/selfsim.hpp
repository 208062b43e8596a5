#pragma once

// Self-similar reduction of the radial Euler-Poisson system with viscosity mu = t rho:
//   rho(r,t) = R(y)/t^2,  u(r,t) = V(y),  y = r/t,  W = (V - y)/y.

#include <algorithm>
#include <cmath>
#include <optional>

#include "collapsar/error.hpp"
#include "collapsar/types.hpp"

namespace collapsar {

inline constexpr double kBreakdownThreshold = 1e-12;

/// H = W'y + 3W + 1. H < 0 keeps W below -1/3.
inline double H(const SimilarityState& s) noexcept { return s.Wp * s.y + 3.0 * s.W + 1.0; }

/// Explicit form of the similarity system:
///   R'  = -R (W'y + 3W + 1) / (W y)
///   W'' = [ (Wy)^2 (W'y + W + 1 - R)/2 + (W'y + 1)^2 + 4W + 3W^2 - A (W'y + 3W + 1)/2 ] / (W y^2)
inline DerivativeTriple rhs(const SimilarityState& s, PressureFlag pressure,
                            double threshold = kBreakdownThreshold) {
  if (!(std::abs(s.W) > threshold) || !(s.y > threshold)) {
    throw Error(ErrorCode::SingularEvaluation,
                "similarity rhs evaluated with |W| or y at the breakdown threshold (y=" + std::to_string(s.y) +
                    ", W=" + std::to_string(s.W) + ")");
  }
  const double y = s.y;
  const double W = s.W;
  const double wpy = s.Wp * y;
  const double wy = W * y;
  const double h = wpy + 3.0 * W + 1.0;
  const double A = pressure.coefficient();

  DerivativeTriple d;
  d.dW = s.Wp;
  d.dR = -s.R * h / wy;
  const double num = 0.5 * wy * wy * (wpy + W + 1.0 - s.R) + (wpy + 1.0) * (wpy + 1.0) + 4.0 * W + 3.0 * W * W -
                     0.5 * A * h;
  d.dWp = num / (W * y * y);
  return d;
}

/// Residuals of the implicit (multiplied-out) system for given derivative values,
/// each scaled by the sum of magnitudes of its terms.
struct ImplicitResidual {
  double mass = 0.0;
  double momentum = 0.0;
};

inline ImplicitResidual implicit_residual(const SimilarityState& s, double dR, double dWp, PressureFlag pressure) {
  const double y = s.y;
  const double W = s.W;
  const double wpy = s.Wp * y;
  const double h = wpy + 3.0 * W + 1.0;
  const double A = pressure.coefficient();

  const double lhs1 = dR * W * y;
  const double rhs1 = -s.R * h;
  const double scale1 = std::abs(lhs1) + std::abs(s.R) * (std::abs(wpy) + 3.0 * std::abs(W) + 1.0);

  const double lhs2 = dWp * W * y * y;
  const double t1 = 0.5 * (W * y) * (W * y) * (wpy + W + 1.0 - s.R);
  const double t2 = (wpy + 1.0) * (wpy + 1.0);
  const double t3 = 4.0 * W + 3.0 * W * W;
  const double t4 = -0.5 * A * h;
  const double scale2 = std::abs(lhs2) + std::abs(t1) + std::abs(t2) + std::abs(4.0 * W) + 3.0 * W * W + std::abs(t4);

  ImplicitResidual r;
  r.mass = scale1 > 0.0 ? std::abs(lhs1 - rhs1) / scale1 : 0.0;
  r.momentum = scale2 > 0.0 ? std::abs(lhs2 - (t1 + t2 + t3 + t4)) / scale2 : 0.0;
  return r;
}

/// Maps surface data to the similarity initial state at y = eps:
/// W = v~ - 1, W' = (v1~ - v~)/eps, R = d1/eps.
inline SimilarityState map_initial(const PhysicalInit& init) {
  if (auto bad = init.violation()) throw Error(ErrorCode::InvalidArgument, *bad);
  SimilarityState s;
  s.y = init.eps;
  s.W = init.v_tilde - 1.0;
  s.Wp = (init.v1_tilde - init.v_tilde) / init.eps;
  s.R = init.d1 / init.eps;
  return s;
}

struct PhysicalPoint {
  double rho = 0.0;
  double u = 0.0;
  double r = 0.0;
};

inline PhysicalPoint reconstruct(const SimilarityState& s, double t) {
  if (!(t > 0.0)) throw Error(ErrorCode::InvalidArgument, "reconstruct requires t > 0");
  return {s.R / (t * t), s.V(), s.y * t};
}

/// t-free factor of the enclosed mass g(r,t) = -t R W y^3.
inline double gravity_similarity(const SimilarityState& s) noexcept { return -s.R * s.W * s.y * s.y * s.y; }

namespace detail {

struct SampleSlopes {
  double dW, dWp, dR;
};

inline SampleSlopes sample_slopes(const SimilarityState& s, PressureFlag pressure) {
  if (std::abs(s.W) > kBreakdownThreshold && s.y > kBreakdownThreshold) {
    const auto d = rhs(s, pressure);
    return {d.dW, d.dWp, d.dR};
  }
  return {s.Wp, 0.0, 0.0};
}

inline double hermite(double f0, double d0, double f1, double d1, double h, double theta) {
  const double t2 = theta * theta;
  const double t3 = t2 * theta;
  return (2 * t3 - 3 * t2 + 1) * f0 + (t3 - 2 * t2 + theta) * h * d0 + (-2 * t3 + 3 * t2) * f1 + (t3 - t2) * h * d1;
}

inline std::size_t bracket(const SolutionTrace& trace, double y) {
  const auto& s = trace.samples;
  auto it = std::upper_bound(s.begin(), s.end(), y, [](double v, const SimilarityState& st) { return v < st.y; });
  std::size_t hi = static_cast<std::size_t>(it - s.begin());
  if (hi == 0) hi = 1;
  if (hi >= s.size()) hi = s.size() - 1;
  return hi - 1;
}

}  // namespace detail

/// Cubic Hermite interpolation of the trace, slopes taken from the similarity system.
inline SimilarityState interpolate(const SolutionTrace& trace, double y) {
  if (trace.samples.empty()) throw Error(ErrorCode::OutOfRange, "interpolate on empty trace");
  const double lo = trace.y_begin();
  const double hi = trace.y_end();
  const double slack = 1e-12 * std::max(1.0, std::abs(hi));
  if (y < lo - slack || y > hi + slack) {
    throw Error(ErrorCode::OutOfRange,
                "y=" + std::to_string(y) + " outside trace [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  if (trace.samples.size() == 1) return trace.samples.front();
  const std::size_t i = detail::bracket(trace, y);
  const auto& a = trace.samples[i];
  const auto& b = trace.samples[i + 1];
  const double h = b.y - a.y;
  const double theta = std::clamp((y - a.y) / h, 0.0, 1.0);
  const auto da = detail::sample_slopes(a, trace.pressure);
  const auto db = detail::sample_slopes(b, trace.pressure);
  SimilarityState s;
  s.y = y;
  s.W = detail::hermite(a.W, da.dW, b.W, db.dW, h, theta);
  s.Wp = detail::hermite(a.Wp, da.dWp, b.Wp, db.dWp, h, theta);
  s.R = std::max(0.0, detail::hermite(a.R, da.dR, b.R, db.dR, h, theta));
  return s;
}

/// Enclosed-mass factor from direct quadrature: core + integral of R a^2 over [y_begin, y].
/// The core term defaults to the self-similar closure -R W y^3 at the first sample.
/// Intervals use the end-corrected trapezoid rule h/2 (f0 + f1) + h^2/12 (f0' - f1').
inline double gravity_quadrature(const SolutionTrace& trace, double y, std::optional<double> core = std::nullopt) {
  if (trace.samples.empty()) throw Error(ErrorCode::OutOfRange, "gravity_quadrature on empty trace");
  const double lo = trace.y_begin();
  const double hi = trace.y_end();
  const double slack = 1e-12 * std::max(1.0, std::abs(hi));
  if (y < lo - slack || y > hi + slack) {
    throw Error(ErrorCode::OutOfRange, "gravity_quadrature: y=" + std::to_string(y) + " outside trace");
  }
  y = std::clamp(y, lo, hi);

  auto integrand = [&](const SimilarityState& s) {
    const auto d = detail::sample_slopes(s, trace.pressure);
    const double f = s.R * s.y * s.y;
    const double df = d.dR * s.y * s.y + 2.0 * s.R * s.y;
    return std::pair{f, df};
  };
  auto panel = [&](const SimilarityState& a, const SimilarityState& b) {
    const double h = b.y - a.y;
    const auto [fa, dfa] = integrand(a);
    const auto [fb, dfb] = integrand(b);
    return 0.5 * h * (fa + fb) + h * h / 12.0 * (dfa - dfb);
  };

  double total = core.value_or(gravity_similarity(trace.front()));
  const auto& s = trace.samples;
  std::size_t k = 0;
  while (k + 1 < s.size() && s[k + 1].y <= y) {
    total += panel(s[k], s[k + 1]);
    ++k;
  }
  if (k + 1 < s.size() && y > s[k].y) total += panel(s[k], interpolate(trace, y));
  return total;
}

}  // namespace collapsar
