#pragma once

// Sample-wise monitors for the qualitative properties of the outer self-similar profile.
// Strict inequalities are checked with zero slack; a sample sitting exactly on the boundary
// fails and is annotated as such.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "collapsar/error.hpp"
#include "collapsar/selfsim.hpp"
#include "collapsar/types.hpp"

namespace collapsar {

struct Violation {
  SimilarityState state;
  double margin = 0.0;
};

struct CheckReport {
  std::string name;
  bool passed = true;
  bool applicable = true;
  std::optional<Violation> first_violation;
  std::optional<double> margin_min;
  std::optional<double> located_y;  // check-specific coordinate (e.g. first positive gap)
  std::string note;
};

namespace detail {

/// Scans margins (positive = satisfied) and fills the report.
template <class MarginFn, class Filter>
CheckReport scan(std::string name, const SolutionTrace& trace, MarginFn&& margin, Filter&& include) {
  CheckReport rep;
  rep.name = std::move(name);
  for (std::size_t i = 0; i < trace.samples.size(); ++i) {
    if (!include(i)) continue;
    const double m = margin(i);
    rep.margin_min = rep.margin_min ? std::min(*rep.margin_min, m) : m;
    if (!(m > 0.0) && !rep.first_violation) {
      rep.first_violation = Violation{trace.samples[i], m};
      if (m == 0.0) rep.note = "boundary";
    }
  }
  rep.passed = !rep.first_violation.has_value();
  return rep;
}

inline CheckReport skipped(std::string name, std::string why) {
  CheckReport rep;
  rep.name = std::move(name);
  rep.passed = true;
  rep.applicable = false;
  rep.note = "skipped: " + std::move(why);
  return rep;
}

inline auto all_samples() {
  return [](std::size_t) { return true; };
}

}  // namespace detail

/// H(y) = W'y + 3W + 1 < 0 at every sample.
inline CheckReport check_H_negative(const SolutionTrace& trace) {
  return detail::scan(
      "H_negative", trace, [&](std::size_t i) { return -H(trace.samples[i]); }, detail::all_samples());
}

/// W < -1/3 at every sample.
inline CheckReport check_W_bound(const SolutionTrace& trace) {
  return detail::scan(
      "W_bound", trace, [&](std::size_t i) { return -1.0 / 3.0 - trace.samples[i].W; }, detail::all_samples());
}

/// R strictly decreasing between consecutive samples.
inline CheckReport check_R_monotone(const SolutionTrace& trace) {
  return detail::scan(
      "R_monotone", trace, [&](std::size_t i) { return trace.samples[i - 1].R - trace.samples[i].R; },
      [](std::size_t i) { return i > 0; });
}

/// Exponent of the comparison profile R(eps) (y/eps)^(-(3 + 1/W(eps))).
inline double decay_exponent(double W_eps) { return -(3.0 + 1.0 / W_eps); }

/// First coordinate past the start where W >= W(eps) or W' >= W'(eps); the end of the trace if none.
inline double decay_window_end(const SolutionTrace& trace) {
  const auto& s = trace.samples;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i].W >= s.front().W || s[i].Wp >= s.front().Wp) return s[i].y;
  }
  return s.back().y;
}

/// R(y) < R(eps) (y/eps)^(-(3 + 1/W(eps))) on (eps, z).
inline CheckReport check_decay_bound(const SolutionTrace& trace) {
  if (trace.samples.size() < 2) return detail::skipped("decay_bound", "trace has fewer than two samples");
  const auto& s0 = trace.front();
  if (!(s0.R > 0.0)) return detail::skipped("decay_bound", "R(eps) = 0, the bound is vacuous");
  const double p = decay_exponent(s0.W);
  const double z = decay_window_end(trace);
  auto rep = detail::scan(
      "decay_bound", trace,
      [&](std::size_t i) {
        const auto& s = trace.samples[i];
        return s0.R * std::pow(s.y / s0.y, p) - s.R;
      },
      [&](std::size_t i) { return i > 0 && trace.samples[i].y < z; });
  rep.located_y = z;
  if (!rep.margin_min) {
    rep.applicable = false;
    rep.note = "skipped: no samples strictly inside (eps, z)";
  }
  return rep;
}

/// First sample coordinate with -2W - R > 0, if any.
inline std::optional<double> first_positive_gap(const SolutionTrace& trace) {
  for (const auto& s : trace.samples) {
    if (-2.0 * s.W - s.R > 0.0) return s.y;
  }
  return std::nullopt;
}

/// -2W - R > 0 for every sample with y >= from_y.
inline CheckReport check_gap(const SolutionTrace& trace, double from_y) {
  if (trace.empty() || from_y < trace.y_begin() || from_y > trace.y_end()) {
    throw Error(ErrorCode::OutOfRange, "check_gap: from_y outside the trace");
  }
  auto rep = detail::scan(
      "gap", trace,
      [&](std::size_t i) {
        const auto& s = trace.samples[i];
        return -2.0 * s.W - s.R;
      },
      [&](std::size_t i) { return trace.samples[i].y >= from_y; });
  rep.located_y = first_positive_gap(trace);
  return rep;
}

/// Tail behaviour R -> 0, W -> -1, W'y -> 0 over [y_end (1 - tail_fraction), y_end].
inline CheckReport check_asymptotics(const SolutionTrace& trace, double tail_fraction, double tol_W, double tol_R,
                                     double tol_Wy) {
  if (trace.empty()) throw Error(ErrorCode::InsufficientTail, "empty trace");
  const double y_end = trace.y_end();
  const double y_from = y_end * (1.0 - tail_fraction);
  std::vector<const SimilarityState*> tail;
  for (const auto& s : trace.samples) {
    if (s.y >= y_from) tail.push_back(&s);
  }
  if (tail.size() < 10) {
    throw Error(ErrorCode::InsufficientTail,
                "tail window holds " + std::to_string(tail.size()) + " samples, need at least 10");
  }

  CheckReport rep;
  rep.name = "asymptotics";
  auto record = [&](const SimilarityState& s, double m, const char* what) {
    rep.margin_min = rep.margin_min ? std::min(*rep.margin_min, m) : m;
    if (!(m > 0.0) && !rep.first_violation) {
      rep.first_violation = Violation{s, m};
      rep.note = what;
    }
  };

  // Trend of |W + 1|: least-squares slope over the window.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto* s : tail) {
    const double v = std::abs(s->W + 1.0);
    sx += s->y;
    sy += v;
    sxx += s->y * s->y;
    sxy += s->y * v;
  }
  const double n = static_cast<double>(tail.size());
  const double denom = n * sxx - sx * sx;
  const double slope = denom > 0.0 ? (n * sxy - sx * sy) / denom : 0.0;
  const double rise = slope * (y_end - tail.front()->y);
  if (rise > 1e-6 * tol_W) record(*tail.back(), -rise, "|W+1| increasing over the tail");

  record(*tail.back(), tol_W - std::abs(tail.back()->W + 1.0), "|W+1| above tolerance at y_end");
  for (const auto* s : tail) {
    record(*s, tol_R - s->R, "R above tolerance in tail");
    record(*s, tol_Wy - std::abs(s->Wp * s->y), "|W'y| above tolerance in tail");
  }
  rep.passed = !rep.first_violation.has_value();
  return rep;
}

/// W < -1 for every sample up to and including the second inflection y_d.
inline CheckReport check_W_below_minus_one_until_yd(const SolutionTrace& trace) {
  const auto yd = trace.first_event(EventKind::InflectionUp);
  if (!yd) return detail::skipped("W_below_minus_one_until_yd", "no InflectionUp event (y_d) in trace");
  auto rep = detail::scan(
      "W_below_minus_one_until_yd", trace, [&](std::size_t i) { return -1.0 - trace.samples[i].W; },
      [&](std::size_t i) { return trace.samples[i].y <= yd->y_star; });
  rep.located_y = yd->y_star;
  return rep;
}

struct SuiteOptions {
  double tail_fraction = 0.2;
  double tol_W = 0.5;
  double tol_R = 0.1;
  double tol_Wy = 0.5;
};

/// Every check with default parameters. The gap check starts at the first positive-gap sample.
inline std::vector<CheckReport> run_suite(const SolutionTrace& trace, const SuiteOptions& opt = {}) {
  std::vector<CheckReport> out;
  out.push_back(check_H_negative(trace));
  out.push_back(check_W_bound(trace));
  out.push_back(check_R_monotone(trace));
  out.push_back(check_decay_bound(trace));

  if (const auto from = first_positive_gap(trace)) {
    auto rep = check_gap(trace, *from);
    if (*from > trace.y_begin()) rep.note = "gap non-positive before y=" + std::to_string(*from);
    out.push_back(std::move(rep));
  } else {
    auto rep = check_gap(trace, trace.y_begin());
    rep.note = "gap never positive along the trace";
    out.push_back(std::move(rep));
  }

  try {
    out.push_back(check_asymptotics(trace, opt.tail_fraction, opt.tol_W, opt.tol_R, opt.tol_Wy));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::InsufficientTail) throw;
    out.push_back(detail::skipped("asymptotics", e.what()));
  }
  out.push_back(check_W_below_minus_one_until_yd(trace));
  return out;
}

inline bool all_passed(const std::vector<CheckReport>& reports) {
  return std::all_of(reports.begin(), reports.end(), [](const CheckReport& r) { return r.passed; });
}

}  // namespace collapsar
