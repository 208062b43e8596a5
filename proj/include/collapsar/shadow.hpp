#pragma once

// Shadow-wave core |x| < eps t: density rho_eps = alpha(t) eps^-3, velocity u_eps = beta(t) eps^nu.
// The outer solution enters only through its values on the cone r = eps t, i.e. through the
// first sample of a similarity trace.

#include <algorithm>
#include <cmath>
#include <functional>
#include <future>
#include <numbers>
#include <optional>
#include <vector>

#include "collapsar/error.hpp"
#include "collapsar/fit.hpp"
#include "collapsar/ode_engine.hpp"
#include "collapsar/selfsim.hpp"
#include "collapsar/types.hpp"

namespace collapsar {

/// Velocity amplitude beta(t). A known constant value enables closed forms.
struct BetaProfile {
  std::function<double(double)> fn;
  std::optional<double> constant;

  static BetaProfile constant_value(double b) { return {[b](double) { return b; }, b}; }
  static BetaProfile function(std::function<double(double)> f) { return {std::move(f), std::nullopt}; }

  double operator()(double t) const { return fn(t); }
};

struct CoreState {
  double nu = 2.0;
  double eps = 0.0;
  BetaProfile beta = BetaProfile::constant_value(0.0);
  std::function<double(double)> alpha;       // alpha(t)
  std::function<double(double)> alpha_rate;  // d alpha / dt

  /// Coefficient multiplying alpha in the balance law (t/3) alpha' + alpha (1 - [nu = 1] beta) = 0.
  double balance_factor(double t) const { return nu == 1.0 ? 1.0 - beta(t) : 1.0; }
};

namespace detail {

/// Adaptive Simpson quadrature.
template <class F>
double simpson(F&& f, double a, double b, double tol, int depth = 40) {
  struct Rec {
    static double run(F& f, double a, double b, double fa, double fm, double fb, double whole, double tol, int depth) {
      const double m = 0.5 * (a + b);
      const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
      const double flm = f(lm), frm = f(rm);
      const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
      const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
      const double delta = left + right - whole;
      if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
      return run(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
             run(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
    }
  };
  if (a == b) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return Rec::run(f, a, b, fa, fm, fb, whole, tol, depth);
}

}  // namespace detail

/// Solves the core balance law for alpha on [t0, t1] given alpha(t0) = alpha0.
///   nu > 1 or beta = 0:   alpha = alpha0 (t0/t)^3
///   nu = 1, beta = b:      alpha = alpha0 (t0/t)^(3(1-b))
///   nu = 1, general beta:  alpha = alpha0 exp(-3 int_t0^t (1 - beta(s))/s ds)
inline CoreState solve_alpha(double nu, BetaProfile beta, double alpha0, double t0, double t1, double eps = 0.0) {
  if (!(nu >= 1.0)) throw Error(ErrorCode::InvalidArgument, "nu must be >= 1");
  if (!(t0 > 0.0) || !(t1 > t0)) throw Error(ErrorCode::InvalidArgument, "solve_alpha needs 0 < t0 < t1");
  if (!(alpha0 > 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha0 must be > 0");

  CoreState core;
  core.nu = nu;
  core.eps = eps;
  core.beta = std::move(beta);

  const bool coupled = nu == 1.0;
  if (!coupled || core.beta.constant) {
    const double p = coupled ? 3.0 * (1.0 - *core.beta.constant) : 3.0;
    core.alpha = [=](double t) { return alpha0 * std::pow(t0 / t, p); };
    core.alpha_rate = [=](double t) { return -p * alpha0 * std::pow(t0 / t, p) / t; };
    return core;
  }

  // Log-time substitution s = t0 e^u keeps the integrand smooth for t0 << t1.
  auto b = core.beta;
  auto alpha = [=](double t) {
    auto integrand = [&](double u) { return 1.0 - b(t0 * std::exp(u)); };
    const double I = detail::simpson(integrand, 0.0, std::log(t / t0), 1e-14);
    return alpha0 * std::exp(-3.0 * I);
  };
  core.alpha = alpha;
  core.alpha_rate = [=](double t) { return -3.0 * alpha(t) * (1.0 - b(t)) / t; };
  return core;
}

/// M(t) = (4/3) pi alpha(t) t^3, the mass inside the cone |x| < eps t.
inline double core_mass(const CoreState& core, double t) {
  return 4.0 / 3.0 * std::numbers::pi * core.alpha(t) * t * t * t;
}

/// Outer state on the cone r = eps t, reconstructed from the first trace sample.
struct SurfaceValues {
  double eps = 0.0;
  double rho1 = 0.0;   // rho_1(eps t, t)
  double u1 = 0.0;     // u_1(eps t, t)
  double du1dr = 0.0;  // d_r u_1(eps t, t)
};

inline SurfaceValues surface_values(const SolutionTrace& trace, double t) {
  if (trace.empty()) throw Error(ErrorCode::InvalidArgument, "surface values need a non-empty trace");
  if (!(t > 0.0)) throw Error(ErrorCode::InvalidArgument, "t must be > 0");
  const auto& s = trace.front();
  const auto p = reconstruct(s, t);
  const double dVdy = s.W + 1.0 + s.y * s.Wp;
  return {s.y, p.rho, p.u, dVdy / t};
}

/// (1/3) alpha' t + alpha (1 - [nu=1] beta) + eps^2 rho_1 u_1, evaluated on the cone.
inline double mass_residual(const CoreState& core, const SolutionTrace& trace, double t) {
  const auto sv = surface_values(trace, t);
  return core.alpha_rate(t) * t / 3.0 + core.alpha(t) * core.balance_factor(t) + sv.eps * sv.eps * sv.rho1 * sv.u1;
}

/// eps^2 rho_1 (u_1^2 - t d_r u_1) on the cone; O(eps) for admissible outer data.
inline double momentum_residual(const CoreState& /*core*/, const SolutionTrace& trace, double t) {
  const auto sv = surface_values(trace, t);
  return sv.eps * sv.eps * sv.rho1 * (sv.u1 * sv.u1 - t * sv.du1dr);
}

/// rho_1(eps t, t) / rho_eps(t); must vanish as eps -> 0 for a denser core.
inline double core_density_ratio(const CoreState& core, const SolutionTrace& trace, double t) {
  const auto sv = surface_values(trace, t);
  return sv.rho1 / (core.alpha(t) / (sv.eps * sv.eps * sv.eps));
}

/// Test profile phi(t) on [t_a, t_b], vanishing at both ends; the spatial factor of the weak form is
/// reduced to phi(0, t) and the surface area 4 pi (eps t)^2 is already inside the residuals.
struct WeakProbe {
  std::function<double(double)> phi;
  double t_a = 0.5;
  double t_b = 2.0;
  int quadrature_nodes = 200;  // composite Simpson panels (rounded up to even)

  /// Smooth bump exp(1 - 1/(1 - s^2)) with s mapping [t_a, t_b] to [-1, 1]; peak value 1.
  static WeakProbe bump(double t_a, double t_b, int nodes = 200) {
    const double mid = 0.5 * (t_a + t_b), half = 0.5 * (t_b - t_a);
    auto phi = [=](double t) {
      const double s = (t - mid) / half;
      return std::abs(s) < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - s * s)) : 0.0;
    };
    return {phi, t_a, t_b, nodes};
  }

  void validate() const {
    if (!(t_a > 0.0) || !(t_b > t_a)) throw Error(ErrorCode::InvalidArgument, "WeakProbe needs 0 < t_a < t_b");
    if (quadrature_nodes < 2) throw Error(ErrorCode::InvalidArgument, "WeakProbe needs at least two panels");
    if (std::abs(phi(t_a)) > 1e-12 || std::abs(phi(t_b)) > 1e-12) {
      throw Error(ErrorCode::InvalidArgument, "WeakProbe: phi must vanish at t_a and t_b");
    }
  }

  /// n equally spaced interior checkpoints.
  std::vector<double> checkpoints(int n) const {
    std::vector<double> t(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = t_a + (t_b - t_a) * (i + 1) / (n + 1.0);
    return t;
  }

  /// Integral of phi(t) f(t) over [t_a, t_b].
  template <class F>
  double integrate(F&& f) const {
    validate();
    const int n = quadrature_nodes + quadrature_nodes % 2;
    const double h = (t_b - t_a) / n;
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double t = i == n ? t_b : t_a + h * i;
      const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      sum += w * phi(t) * f(t);
    }
    return sum * h / 3.0;
  }
};

/// Tested mass residual: integral of phi(t) * mass_residual(t) over the probe's support.
inline double weak_mass_residual(const WeakProbe& probe, const CoreState& core, const SolutionTrace& trace) {
  return probe.integrate([&](double t) { return mass_residual(core, trace, t); });
}

/// Tested momentum residual: integral of phi(t) * momentum_residual(t).
inline double weak_momentum_residual(const WeakProbe& probe, const CoreState& core, const SolutionTrace& trace) {
  return probe.integrate([&](double t) { return momentum_residual(core, trace, t); });
}

struct ScalingFit {
  std::vector<double> eps_values;
  std::vector<double> magnitudes;
  double slope = 0.0;
  double fit_residual = 0.0;
};

inline ScalingFit fit_scaling(std::vector<double> eps, std::vector<double> magnitudes) {
  if (eps.size() != magnitudes.size() || eps.size() < 3) {
    throw Error(ErrorCode::InvalidArgument, "scaling fit needs at least three matched points");
  }
  for (std::size_t i = 1; i < eps.size(); ++i) {
    if (!(eps[i] < eps[i - 1])) throw Error(ErrorCode::InvalidArgument, "eps values must strictly decrease");
  }
  std::vector<double> mag(magnitudes.size());
  std::transform(magnitudes.begin(), magnitudes.end(), mag.begin(), [](double m) { return std::abs(m); });
  const auto f = loglog_fit(eps, mag);
  return {std::move(eps), std::move(magnitudes), f.slope, f.rms};
}

struct SweepPoint {
  double eps = 0.0;
  double u1 = 0.0;
  double rho1 = 0.0;
  double mass_res = 0.0;
  double mom_res = 0.0;
  Termination termination = Termination::ReachedEnd;
};

struct SweepOptions {
  double t = 1.0;
  double y_end = 1.0;  // each member integrates the outer profile on [eps, y_end]
  IntegratorConfig integrator;
  unsigned jobs = 1;
  bool keep_traces = false;
};

struct ScalingSweep {
  std::vector<SweepPoint> points;
  bool aborted = false;  // an integration failed; points hold the members before it
  std::optional<ScalingFit> u1, rho1, mass, momentum;
  std::vector<SolutionTrace> traces;  // one per eps when keep_traces is set
};

/// Runs one sweep member: integrate from map_initial(init with eps) and probe the cone residuals
/// against the balance-solved core alpha = t^-3 (nu = 2).
inline SweepPoint sweep_member(PhysicalInit init, double eps, PressureFlag pressure, const SweepOptions& opt,
                               SolutionTrace* keep = nullptr) {
  init.eps = eps;
  IntegratorConfig cfg = opt.integrator;
  cfg.y_end = std::max(opt.y_end, 2.0 * eps);
  cfg.h_init.reset();
  cfg.h_max.reset();
  auto trace = integrate(map_initial(init), pressure, cfg);
  const auto core = solve_alpha(2.0, BetaProfile::constant_value(0.0), 1.0, 1.0, 2.0, eps);
  const auto sv = surface_values(trace, opt.t);
  SweepPoint p;
  p.eps = eps;
  p.u1 = sv.u1;
  p.rho1 = sv.rho1;
  p.mass_res = mass_residual(core, trace, opt.t);
  p.mom_res = momentum_residual(core, trace, opt.t);
  p.termination = trace.termination;
  if (keep) *keep = std::move(trace);
  return p;
}

/// Sweeps eps (strictly decreasing) at fixed surface data and fits log-log slopes of |u_1|, rho_1,
/// |mass residual| and |momentum residual|. Expected: +1, -1, +2, +1.
inline ScalingSweep admissibility_scaling(const PhysicalInit& init, const std::vector<double>& eps_values,
                                          PressureFlag pressure, const SweepOptions& opt = {}) {
  if (eps_values.size() < 3) throw Error(ErrorCode::InvalidArgument, "sweep needs at least three eps values");
  ScalingSweep out;
  std::vector<SweepPoint> pts(eps_values.size());
  std::vector<SolutionTrace> kept(opt.keep_traces ? eps_values.size() : 0);
  const std::size_t jobs = std::max(1u, opt.jobs);
  for (std::size_t base = 0; base < eps_values.size(); base += jobs) {
    std::vector<std::future<SweepPoint>> batch;
    for (std::size_t i = base; i < std::min(eps_values.size(), base + jobs); ++i) {
      batch.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred,
                                 [&, i] {
                                   return sweep_member(init, eps_values[i], pressure, opt,
                                                       opt.keep_traces ? &kept[i] : nullptr);
                                 }));
    }
    for (std::size_t k = 0; k < batch.size(); ++k) pts[base + k] = batch[k].get();
  }
  out.traces = std::move(kept);
  for (const auto& p : pts) {
    if (p.termination != Termination::ReachedEnd) {
      out.aborted = true;
      break;
    }
    out.points.push_back(p);
  }
  if (out.points.size() >= 3) {
    std::vector<double> e, u, r, m, q;
    for (const auto& p : out.points) {
      e.push_back(p.eps);
      u.push_back(p.u1);
      r.push_back(p.rho1);
      m.push_back(p.mass_res);
      q.push_back(p.mom_res);
    }
    out.u1 = fit_scaling(e, u);
    out.rho1 = fit_scaling(e, r);
    out.mass = fit_scaling(e, m);
    out.momentum = fit_scaling(e, q);
  }
  return out;
}

/// eps rho_1 u_1^2 on the cone at t = 1; the inviscid core needs rho_1 u_1^2 = O(1/eps).
inline double inviscid_admissibility(const SolutionTrace& trace) {
  const auto sv = surface_values(trace, 1.0);
  return sv.eps * sv.rho1 * sv.u1 * sv.u1;
}

struct BoundednessVerdict {
  bool passed = true;
  std::optional<double> slope;  // log-log slope over the positive entries
};

/// A sweep of eps * rho_1 u_1^2 is bounded when it does not grow as eps decreases
/// (log-log slope >= -0.1). All-zero sweeps are trivially bounded.
inline BoundednessVerdict inviscid_bounded(const std::vector<double>& eps, const std::vector<double>& values) {
  if (eps.size() != values.size()) throw Error(ErrorCode::InvalidArgument, "mismatched sweep lists");
  std::vector<double> e, v;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!std::isfinite(values[i])) return {false, std::nullopt};
    if (std::abs(values[i]) > 0.0) {
      e.push_back(eps[i]);
      v.push_back(std::abs(values[i]));
    }
  }
  if (e.size() < 2) return {true, std::nullopt};
  const auto f = loglog_fit(e, v);
  return {f.slope >= -0.1, f.slope};
}

}  // namespace collapsar
