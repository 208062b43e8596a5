#pragma once

// Similarity system without viscosity (mu = 0). For p = rho the density equation
//   R' = R W y (R + 2W) / (1 - (Wy)^2)
// is singular on the sonic line 1 - (Wy)^2 = 0 unless R + 2W = 0 there (Larson-Penston).
// For p = 0 the only finite critical point is W y = 0.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

#include "collapsar/dopri5.hpp"
#include "collapsar/error.hpp"
#include "collapsar/selfsim.hpp"
#include "collapsar/types.hpp"

namespace collapsar {

struct InviscidState {
  double y = 0.0;
  double W = 0.0;
  double R = 0.0;

  bool valid() const noexcept {
    return std::isfinite(y) && std::isfinite(W) && std::isfinite(R) && y > 0.0 && R >= 0.0;
  }
};

struct InviscidDerivative {
  double dW = 0.0;
  double dR = 0.0;
};

inline constexpr double kSonicSingularThreshold = 1e-12;

/// 1 - (W y)^2; vanishes on the sonic line.
inline double sonic_function(const InviscidState& s) noexcept {
  const double wy = s.W * s.y;
  return 1.0 - wy * wy;
}

/// Both derivatives of the inviscid system. dW comes from the mass equation
/// W'y = -(R'/R) W y - (3W + 1), with R'/R taken in closed form so that vacuum is the R -> 0 limit.
inline InviscidDerivative rhs_inviscid(const InviscidState& s, PressureFlag pressure,
                                       double sonic_threshold = kSonicSingularThreshold) {
  if (!(s.y > kBreakdownThreshold)) throw Error(ErrorCode::SingularEvaluation, "inviscid rhs at y <= threshold");
  const double wy = s.W * s.y;
  double log_rate;  // R'/R
  if (pressure.isothermal_law()) {
    const double d = 1.0 - wy * wy;
    if (!(std::abs(d) > sonic_threshold)) {
      throw Error(ErrorCode::SonicSingular, "inviscid rhs on the sonic line (y=" + std::to_string(s.y) + ")");
    }
    log_rate = wy * (s.R + 2.0 * s.W) / d;
  } else {
    if (!(std::abs(wy) > kBreakdownThreshold)) {
      throw Error(ErrorCode::SingularEvaluation, "inviscid rhs with W y at zero (y=" + std::to_string(s.y) + ")");
    }
    log_rate = -(s.R + 2.0 * s.W) / wy;
  }
  InviscidDerivative d;
  d.dR = s.R * log_rate;
  d.dW = (-log_rate * wy - (3.0 * s.W + 1.0)) / s.y;
  return d;
}

enum class SonicClass { LarsonPenstonCandidate, BlowUp };

inline std::string_view to_string(SonicClass c) {
  return c == SonicClass::LarsonPenstonCandidate ? "LarsonPenstonCandidate" : "BlowUp";
}

struct SonicReport {
  double y_bar = 0.0;
  double lp_defect = 0.0;        // R + 2W at y_bar
  double sonic_residual = 0.0;   // |1 - (W y_bar)^2|
  InviscidState state;
  SonicClass classification = SonicClass::BlowUp;
};

struct InviscidConfig {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  double y_end = 10.0;
  std::optional<double> h_init;
  std::optional<double> h_max;
  std::int64_t max_steps = 1'000'000;
  double locator_tol = 1e-8;
  double lp_tol = 1e-4;
  // Below this |1 - (Wy)^2| an approaching trajectory is continued with the sonic function itself
  // as the independent variable, which stays regular when R' blows up.
  double approach_switch = 1e-3;
};

struct InviscidTrace {
  std::vector<InviscidState> samples;
  PressureFlag pressure;
  Termination termination = Termination::ReachedEnd;
};

struct InviscidResult {
  InviscidTrace trace;
  std::optional<SonicReport> sonic;
};

namespace detail {

inline SonicReport make_sonic_report(const InviscidState& s, const InviscidConfig& cfg) {
  SonicReport r;
  r.y_bar = s.y;
  r.state = s;
  r.lp_defect = s.R + 2.0 * s.W;
  r.sonic_residual = std::abs(sonic_function(s));
  r.classification = std::abs(r.lp_defect) <= cfg.lp_tol ? SonicClass::LarsonPenstonCandidate : SonicClass::BlowUp;
  return r;
}

/// d(1 - (Wy)^2)/dy along the flow.
inline double sonic_rate(const InviscidState& s, const InviscidDerivative& d) {
  return -2.0 * s.W * s.y * (d.dW * s.y + s.W);
}

/// Integrates (y, W, R) with g = 1 - (Wy)^2 as independent variable from the current state to
/// g = target (same sign, close to zero). Returns nullopt if the approach stalls.
inline std::optional<InviscidState> approach_sonic(const InviscidState& from, PressureFlag pressure,
                                                   double target, const InviscidConfig& cfg) {
  using V3 = rk::Vec<3>;
  auto f = [&](double /*g*/, const V3& v) -> V3 {
    const InviscidState s{v[0], v[1], v[2]};
    const auto d = rhs_inviscid(s, pressure);
    const double rate = sonic_rate(s, d);
    if (!std::isfinite(rate) || rate == 0.0) throw Error(ErrorCode::SonicSingular, "tangent sonic approach");
    return {1.0 / rate, d.dW / rate, d.dR / rate};
  };
  double g = sonic_function(from);
  V3 v{from.y, from.W, from.R};
  V3 k1;
  try {
    k1 = f(g, v);
  } catch (const Error&) {
    return std::nullopt;
  }
  double h = 0.01 * (target - g);
  for (int it = 0; it < 100000; ++it) {
    const double remaining = target - g;
    if (remaining == 0.0) return InviscidState{v[0], v[1], v[2]};
    if (std::abs(h) > std::abs(remaining)) h = remaining;
    if (std::abs(h) < 1e-3 * cfg.locator_tol * std::numeric_limits<double>::epsilon()) return std::nullopt;
    rk::StepAttempt<3> att;
    try {
      att = rk::dopri5_attempt<3>(f, g, v, k1, h, cfg.rel_tol, cfg.abs_tol);
    } catch (const Error&) {
      h *= 0.2;
      continue;
    }
    if (!(att.err <= 1.0)) {
      h *= rk::step_factor(att.err);
      continue;
    }
    g = (h == remaining) ? target : g + h;
    v = att.y1;
    k1 = att.k7;
    h *= rk::step_factor(att.err);
  }
  return std::nullopt;
}

}  // namespace detail

/// Integrates the inviscid system until y_end, the sonic line (p = rho) or W y = 0 (p = 0).
inline InviscidResult integrate_inviscid(const InviscidState& start, PressureFlag pressure,
                                         const InviscidConfig& cfg = {}) {
  using V2 = rk::Vec<2>;
  if (!start.valid()) throw Error(ErrorCode::InvalidArgument, "integrate_inviscid: invalid start state");
  if (!(cfg.y_end > start.y)) throw Error(ErrorCode::InvalidArgument, "y_end must exceed the start coordinate");

  InviscidResult out;
  out.trace.pressure = pressure;
  out.trace.samples.push_back(start);
  const bool sonic_possible = pressure.isothermal_law();

  auto f = [&](double y, const V2& v) -> V2 {
    const auto d = rhs_inviscid({y, v[0], v[1]}, pressure);
    return {d.dW, d.dR};
  };

  const double span = cfg.y_end - start.y;
  const double h_max = cfg.h_max.value_or(0.01 * span);
  double h = std::min(cfg.h_init.value_or(1e-6 * start.y), h_max);
  double x = start.y;
  V2 v{start.W, start.R};
  V2 k1 = f(x, v);
  double g_prev = sonic_function(start);

  auto try_approach = [&](const InviscidState& s) -> bool {
    const double g = sonic_function(s);
    const double target = std::copysign(0.5 * cfg.locator_tol, g);
    if (auto hit = detail::approach_sonic(s, pressure, target, cfg)) {
      out.sonic = detail::make_sonic_report(*hit, cfg);
      out.trace.samples.push_back(*hit);
      out.trace.termination = Termination::SonicPoint;
      return true;
    }
    return false;
  };

  for (std::int64_t n = 0; x < cfg.y_end; ++n) {
    if (n >= cfg.max_steps) {
      out.trace.termination = Termination::BudgetExhausted;
      break;
    }
    const InviscidState cur{x, v[0], v[1]};
    if (sonic_possible && std::abs(g_prev) < cfg.approach_switch) {
      const auto d = rhs_inviscid(cur, pressure);
      if (g_prev * detail::sonic_rate(cur, d) < 0.0 && try_approach(cur)) break;
    }
    h = std::min({h, h_max, cfg.y_end - x});
    const bool last = h >= cfg.y_end - x;
    const double h_min = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, x);
    if (h < h_min) {
      if (sonic_possible && std::abs(g_prev) < 0.1 && try_approach(cur)) break;
      out.trace.termination = (!sonic_possible && std::abs(v[0] * x) < 1e-6) ? Termination::BreakdownWZero
                                                                               : Termination::StepFailure;
      break;
    }
    rk::StepAttempt<2> att;
    bool ok = true;
    try {
      att = rk::dopri5_attempt<2>(f, x, v, k1, h, cfg.rel_tol, cfg.abs_tol);
      ok = std::isfinite(att.err) && std::isfinite(att.y1[0]) && std::isfinite(att.y1[1]);
      if (!sonic_possible) ok = ok && std::signbit(att.y1[0]) == std::signbit(v[0]);
    } catch (const Error&) {
      ok = false;
    }
    if (!ok) {
      h *= 0.2;
      continue;
    }
    if (att.err > 1.0) {
      h *= rk::step_factor(att.err);
      continue;
    }
    const double x_new = (last || x + h >= cfg.y_end) ? cfg.y_end : x + h;
    att.y1[1] = std::max(att.y1[1], 0.0);
    const InviscidState s_new{x_new, att.y1[0], att.y1[1]};
    const double g_new = sonic_function(s_new);

    if (sonic_possible && std::signbit(g_new) != std::signbit(g_prev)) {
      // Crossed within the step: bisect the dense output.
      double lo = x, hi = x_new;
      InviscidState s_mid = s_new;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const auto dv = att.dense(mid);
        s_mid = {mid, dv[0], dv[1]};
        const double gm = sonic_function(s_mid);
        if (std::abs(gm) <= 0.5 * cfg.locator_tol || hi - lo < 4.0 * std::numeric_limits<double>::epsilon() * mid) {
          break;
        }
        if (std::signbit(gm) == std::signbit(g_prev)) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      out.sonic = detail::make_sonic_report(s_mid, cfg);
      out.trace.samples.push_back(s_mid);
      out.trace.termination = Termination::SonicPoint;
      break;
    }

    out.trace.samples.push_back(s_new);
    x = x_new;
    v = att.y1;
    k1 = att.k7;
    g_prev = g_new;
    if (!sonic_possible && std::abs(v[0] * x) <= kBreakdownThreshold) {
      out.trace.termination = Termination::BreakdownWZero;
      break;
    }
    h *= rk::step_factor(att.err);
  }
  return out;
}

}  // namespace collapsar
