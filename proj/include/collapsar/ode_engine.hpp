#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "collapsar/dopri5.hpp"
#include "collapsar/error.hpp"
#include "collapsar/selfsim.hpp"
#include "collapsar/types.hpp"

namespace collapsar {

struct IntegratorConfig {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  std::optional<double> h_init;  // default 1e-6 * start.y
  std::optional<double> h_max;   // default 0.01 * span
  double y_end = 10.0;
  std::int64_t max_steps = 10'000'000;
  // Sign changes whose two sides are both below this magnitude are treated as round-off.
  double event_floor = 1e-9;
  // Below this |W| the maximum step is cut by 10x while approaching breakdown.
  double near_breakdown = 1e-6;
  double breakdown_threshold = kBreakdownThreshold;
};

/// The canonical right-hand side; integrate() takes any callable with the same signature so that
/// alternative (or deliberately broken) systems can be run through the identical machinery.
struct SimilarityRhs {
  DerivativeTriple operator()(const SimilarityState& s, PressureFlag p) const { return rhs(s, p); }
};

namespace detail {

using Vec3 = rk::Vec<3>;

inline SimilarityState to_state(double y, const Vec3& v) { return {y, v[0], v[1], v[2]}; }

inline std::optional<EventKind> classify(int channel, double before, double after) {
  const bool up = before < 0.0 && after > 0.0;
  const bool down = before > 0.0 && after < 0.0;
  if (!up && !down) return std::nullopt;
  switch (channel) {
    case 0: return up ? EventKind::InflectionDown : EventKind::InflectionUp;
    case 1: return up ? EventKind::VelocityMin : EventKind::WpSignChange;
    default: return EventKind::CrossMinusOne;
  }
}

}  // namespace detail

/// Adaptive Dormand-Prince integration of the similarity system from start.y to cfg.y_end.
/// Never throws for numerical trouble: the trace is returned with its termination reason.
template <class Rhs>
SolutionTrace integrate(const SimilarityState& start, PressureFlag pressure, const IntegratorConfig& cfg, Rhs&& system) {
  using detail::Vec3;
  if (!start.valid()) throw Error(ErrorCode::InvalidArgument, "integrate: start state violates invariants");
  if (!(cfg.rel_tol > 0.0 && cfg.abs_tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerances must be > 0");
  if (!(cfg.y_end > start.y)) throw Error(ErrorCode::InvalidArgument, "y_end must exceed the start coordinate");
  if (cfg.max_steps <= 0) throw Error(ErrorCode::InvalidArgument, "max_steps must be > 0");
  if (!(std::abs(start.W) > cfg.breakdown_threshold)) {
    throw Error(ErrorCode::SingularEvaluation, "integrate: |W| at start is below the breakdown threshold");
  }

  SolutionTrace trace;
  trace.pressure = pressure;
  trace.samples.push_back(start);

  const double span = cfg.y_end - start.y;
  const double h_max = cfg.h_max.value_or(0.01 * span);
  double h = std::min(cfg.h_init.value_or(1e-6 * start.y), h_max);

  auto f = [&](double y, const Vec3& v) -> Vec3 {
    const auto d = system(detail::to_state(y, v), pressure);
    return {d.dW, d.dWp, d.dR};
  };
  auto channels = [&](const SimilarityState& s, const Vec3& k) {
    return std::array<double, 3>{k[1], s.Wp, s.W + 1.0};
  };

  double x = start.y;
  Vec3 v{start.W, start.Wp, start.R};
  Vec3 k1 = f(x, v);
  auto g_prev = channels(start, k1);

  std::int64_t attempts = 0;
  trace.termination = Termination::ReachedEnd;

  while (x < cfg.y_end) {
    if (attempts++ >= cfg.max_steps) {
      trace.termination = Termination::BudgetExhausted;
      break;
    }
    double cap = h_max;
    if (std::abs(v[0]) < cfg.near_breakdown) cap *= 0.1;
    h = std::min({h, cap, cfg.y_end - x});
    const bool last = h >= cfg.y_end - x;
    const double h_min = 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x));
    if (h < h_min) {
      trace.termination =
          std::abs(v[0]) < cfg.near_breakdown ? Termination::BreakdownWZero : Termination::StepFailure;
      break;
    }

    rk::StepAttempt<3> att;
    bool ok = true;
    try {
      att = rk::dopri5_attempt<3>(f, x, v, k1, h, cfg.rel_tol, cfg.abs_tol);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SingularEvaluation) throw;
      ok = false;
    }
    if (ok) {
      const bool finite = std::all_of(att.y1.begin(), att.y1.end(), [](double c) { return std::isfinite(c); }) &&
                          std::isfinite(att.err);
      const bool sign_kept = (att.y1[0] < 0.0) == (v[0] < 0.0);
      ok = finite && sign_kept;
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
    att.y1[2] = std::max(att.y1[2], 0.0);
    const SimilarityState s_new = detail::to_state(x_new, att.y1);
    const auto g_new = channels(s_new, att.k7);

    // Event search on sub-intervals of the step so that close pairs of roots are both seen.
    constexpr int kSplits = 8;
    auto channels_at = [&](double y) -> std::optional<std::array<double, 3>> {
      const Vec3 v_mid = att.dense(y);
      try {
        return channels(detail::to_state(y, v_mid), f(y, v_mid));
      } catch (const Error&) {
        return std::nullopt;
      }
    };
    std::array<double, kSplits + 1> ys{};
    std::array<std::optional<std::array<double, 3>>, kSplits + 1> gs{};
    ys[0] = x;
    gs[0] = g_prev;
    for (int j = 1; j < kSplits; ++j) {
      ys[j] = x + h * j / kSplits;
      gs[j] = channels_at(ys[j]);
    }
    ys[kSplits] = x_new;
    gs[kSplits] = g_new;

    std::vector<EventRecord> found;
    for (int ch = 0; ch < 3; ++ch) {
      for (int j = 0; j < kSplits; ++j) {
        if (!gs[j] || !gs[j + 1]) continue;
        const double ga = (*gs[j])[ch];
        const double gb = (*gs[j + 1])[ch];
        const auto kind = detail::classify(ch, ga, gb);
        if (!kind || std::max(std::abs(ga), std::abs(gb)) <= cfg.event_floor) continue;
        double lo = ys[j], hi = ys[j + 1], glo = ga;
        const double tol = cfg.rel_tol * std::max(1.0, std::abs(hi));
        bool good = true;
        while (hi - lo > tol) {
          const double mid = 0.5 * (lo + hi);
          const auto c = channels_at(mid);
          if (!c) {
            good = false;
            break;
          }
          const double gm = (*c)[ch];
          if (gm == 0.0) {
            lo = hi = mid;
          } else if (std::signbit(gm) == std::signbit(glo)) {
            lo = mid;
            glo = gm;
          } else {
            hi = mid;
          }
        }
        if (good) {
          const double ystar = 0.5 * (lo + hi);
          found.push_back({*kind, ystar, detail::to_state(ystar, att.dense(ystar))});
        }
      }
    }
    std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.y_star < b.y_star; });
    const double gap = 1e-6 * h;
    for (const auto& e : found) {
      trace.events.push_back(e);
      if (e.y_star > trace.samples.back().y + gap && e.y_star < x_new - gap) {
        SimilarityState s = e.state_at;
        s.R = std::max(s.R, 0.0);
        trace.samples.push_back(s);
      }
    }

    trace.steps.push_back({x, x_new - x});
    trace.samples.push_back(s_new);
    x = x_new;
    v = att.y1;
    k1 = att.k7;
    g_prev = g_new;

    if (std::abs(v[0]) <= cfg.breakdown_threshold) {
      trace.termination = Termination::BreakdownWZero;
      break;
    }
    h *= rk::step_factor(att.err);
  }
  return trace;
}

inline SolutionTrace integrate(const SimilarityState& start, PressureFlag pressure, const IntegratorConfig& cfg) {
  return integrate(start, pressure, cfg, SimilarityRhs{});
}

/// Classical RK4 with constant step h on [start.y, y_end]; h must divide the span.
inline SolutionTrace fixed_step_rk4(const SimilarityState& start, PressureFlag pressure, double h, double y_end) {
  using detail::Vec3;
  const double span = y_end - start.y;
  if (!(h > 0.0) || !(span > 0.0) || h > span * (1.0 + 1e-12)) {
    throw Error(ErrorCode::BadStep, "fixed_step_rk4: step must be positive and no larger than the span");
  }
  const double n_real = span / h;
  const auto n = static_cast<std::int64_t>(std::llround(n_real));
  if (std::abs(n_real - static_cast<double>(n)) > 1e-6 * n_real) {
    throw Error(ErrorCode::BadStep, "fixed_step_rk4: step does not divide the span");
  }
  auto f = [&](double y, const Vec3& v) -> Vec3 {
    const auto d = rhs(detail::to_state(y, v), pressure);
    return {d.dW, d.dWp, d.dR};
  };
  SolutionTrace trace;
  trace.pressure = pressure;
  trace.samples.reserve(static_cast<std::size_t>(n) + 1);
  trace.samples.push_back(start);
  Vec3 v{start.W, start.Wp, start.R};
  for (std::int64_t i = 0; i < n; ++i) {
    const double x = start.y + static_cast<double>(i) * h;
    v = rk::rk4_step<3>(f, x, v, h);
    const double x1 = i + 1 == n ? y_end : start.y + static_cast<double>(i + 1) * h;
    trace.steps.push_back({x, x1 - x});
    trace.samples.push_back(detail::to_state(x1, v));
  }
  return trace;
}

namespace detail {

/// Finite-difference weights for the first derivative at x0 (Fornberg's recursion).
inline std::vector<double> fd_weights(double x0, std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::array<double, 2>> c(n, {0.0, 0.0});
  double c1 = 1.0;
  double c4 = x[0] - x0;
  c[0][0] = 1.0;
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t mn = std::min<std::size_t>(i, 1);
    double c2 = 1.0;
    const double c5 = c4;
    c4 = x[i] - x0;
    for (std::size_t j = 0; j < i; ++j) {
      const double c3 = x[i] - x[j];
      c2 *= c3;
      if (j == i - 1) {
        for (std::size_t k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
        c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
      }
      for (std::size_t k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
      c[j][0] = c4 * c[j][0] / c3;
    }
    c1 = c2;
  }
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = c[i][1];
  return w;
}

}  // namespace detail

/// Largest scaled residual of the implicit system along the trace, with derivatives from centered
/// finite differences (five-point stencils where available, three-point next to the ends).
inline double residual(const SolutionTrace& trace, PressureFlag pressure) {
  const auto& s = trace.samples;
  if (s.size() < 3) throw Error(ErrorCode::InvalidArgument, "residual needs at least three samples");
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    const std::size_t half = (i >= 2 && i + 2 < s.size()) ? 2 : 1;
    std::vector<double> xs;
    for (std::size_t j = i - half; j <= i + half; ++j) xs.push_back(s[j].y);
    const auto w = detail::fd_weights(s[i].y, xs);
    double dW = 0.0, dWp = 0.0, dR = 0.0;
    for (std::size_t j = 0; j < xs.size(); ++j) {
      const auto& sj = s[i - half + j];
      dW += w[j] * sj.W;
      dWp += w[j] * sj.Wp;
      dR += w[j] * sj.R;
    }
    const auto r = implicit_residual(s[i], dR, dWp, pressure);
    const double def = std::abs(dW - s[i].Wp) / (std::abs(s[i].Wp) + std::abs(s[i].W) / s[i].y);
    worst = std::max({worst, r.mass, r.momentum, def});
  }
  return worst;
}

}  // namespace collapsar
