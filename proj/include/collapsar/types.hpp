#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "collapsar/error.hpp"

namespace collapsar {

/// Pressure law p = A * rho with A in {0, 1} (sound speed normalized to one).
class PressureFlag {
 public:
  constexpr PressureFlag() = default;
  explicit PressureFlag(int a) : a_(a) {
    if (a != 0 && a != 1) {
      throw Error(ErrorCode::InvalidArgument, "pressure flag A must be 0 or 1, got " + std::to_string(a));
    }
  }

  static PressureFlag vanishing() { return PressureFlag(0); }
  static PressureFlag isothermal() { return PressureFlag(1); }

  constexpr int value() const noexcept { return a_; }
  constexpr double coefficient() const noexcept { return static_cast<double>(a_); }
  constexpr bool isothermal_law() const noexcept { return a_ == 1; }

  friend constexpr bool operator==(PressureFlag, PressureFlag) = default;

 private:
  int a_ = 0;
};

/// Phase point of the similarity system: y = r/t, W = (V - y)/y, Wp = dW/dy, R = t^2 rho.
struct SimilarityState {
  double y = 0.0;
  double W = 0.0;
  double Wp = 0.0;
  double R = 0.0;

  /// Similarity velocity V = y (W + 1).
  double V() const noexcept { return y * (W + 1.0); }

  bool valid() const noexcept {
    return std::isfinite(y) && std::isfinite(W) && std::isfinite(Wp) && std::isfinite(R) && y > 0.0 && R >= 0.0;
  }

  friend bool operator==(const SimilarityState&, const SimilarityState&) = default;
};

/// Physical data on the core surface r = eps * t.
struct PhysicalInit {
  double v_tilde = 0.0;   // u(eps t, t) = v_tilde * eps
  double v1_tilde = 0.0;  // t * du/dr at the surface
  double d1 = 0.0;        // t^2 rho(eps t, t) = d1 / eps
  double eps = 0.0;

  /// Field-level validation; returns the first violated invariant, if any.
  std::optional<std::string> violation() const {
    if (!(std::isfinite(v_tilde) && v_tilde < 0.0)) return "v_tilde must be finite and < 0";
    if (!(std::isfinite(v1_tilde) && v1_tilde < 0.0)) return "v1_tilde must be finite and < 0";
    if (!(std::isfinite(d1) && d1 > 0.0)) return "d1 must be finite and > 0";
    if (!(std::isfinite(eps) && eps > 0.0)) return "eps must be finite and > 0";
    return std::nullopt;
  }

  /// W'(eps) >= 0 case: accepted, but outside the regime where the collapse invariants are guaranteed.
  bool increasing_start() const noexcept { return v1_tilde - v_tilde >= 0.0; }
};

struct DerivativeTriple {
  double dW = 0.0;
  double dWp = 0.0;
  double dR = 0.0;
};

enum class EventKind {
  InflectionDown,  // W'' crosses zero upwards (end of the concave phase), y_c
  VelocityMin,     // W' crosses zero upwards (minimum of W), z
  InflectionUp,    // W'' crosses zero downwards, y_d
  CrossMinusOne,   // W crosses -1, y_e
  WpSignChange,    // W' crosses zero downwards, y_f
};

inline std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::InflectionDown: return "InflectionDown";
    case EventKind::VelocityMin: return "VelocityMin";
    case EventKind::InflectionUp: return "InflectionUp";
    case EventKind::CrossMinusOne: return "CrossMinusOne";
    case EventKind::WpSignChange: return "WpSignChange";
  }
  return "Unknown";
}

inline std::optional<EventKind> event_kind_from_string(std::string_view s) {
  for (auto k : {EventKind::InflectionDown, EventKind::VelocityMin, EventKind::InflectionUp,
                 EventKind::CrossMinusOne, EventKind::WpSignChange}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

struct EventRecord {
  EventKind kind{};
  double y_star = 0.0;
  SimilarityState state_at;
};

enum class Termination { ReachedEnd, BreakdownWZero, StepFailure, BudgetExhausted, SonicPoint };

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::ReachedEnd: return "ReachedEnd";
    case Termination::BreakdownWZero: return "BreakdownWZero";
    case Termination::StepFailure: return "StepFailure";
    case Termination::BudgetExhausted: return "BudgetExhausted";
    case Termination::SonicPoint: return "SonicPoint";
  }
  return "Unknown";
}

struct AcceptedStep {
  double y_start = 0.0;
  double h = 0.0;
};

/// Samples ordered by strictly increasing y, plus the events found between them.
struct SolutionTrace {
  std::vector<SimilarityState> samples;
  PressureFlag pressure;
  std::vector<EventRecord> events;
  Termination termination = Termination::ReachedEnd;
  std::vector<AcceptedStep> steps;

  bool empty() const noexcept { return samples.empty(); }
  std::size_t size() const noexcept { return samples.size(); }
  const SimilarityState& front() const { return samples.front(); }
  const SimilarityState& back() const { return samples.back(); }
  double y_begin() const { return samples.front().y; }
  double y_end() const { return samples.back().y; }

  std::optional<EventRecord> first_event(EventKind kind) const {
    for (const auto& e : events) {
      if (e.kind == kind) return e;
    }
    return std::nullopt;
  }
};

}  // namespace collapsar
