#pragma once

// Radial system in similarity variables. With y = r/t, tau = ln(t/t0), rho = rho_hat/t^2, u = u_hat
// and m = y^2 rho_hat, the equations become autonomous in tau:
//
//   d_tau m     = -d_y(m (u_hat - y)) - m
//   d_tau u_hat = -(u_hat - y) d_y u_hat - A d_y ln rho_hat
//                 + 2 [ d_yy u_hat + (d_y ln rho_hat) d_y u_hat + 2 d_y u_hat / y - 2 u_hat / y^2 ]
//                 - G / y^2,          G(y) = G_core + int_{y_min}^{y} rho_hat a^2 da
//
// so a self-similar profile (R, V) is a fixed point. The viscosity mu = t rho turns into the constant
// coefficient 2 in these variables.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "collapsar/error.hpp"
#include "collapsar/selfsim.hpp"
#include "collapsar/types.hpp"

namespace collapsar {

inline constexpr double kViscousDiffusivity = 2.0;

struct PdeConfig {
  std::size_t cells = 400;  // grid nodes, end nodes included
  double cfl = 0.4;
  double tau_end = 1.0;
  std::optional<double> y_min;  // default: start of the trace
  std::optional<double> y_max;  // default: end of the trace
  // Enclosed-mass factor below y_min; default is the profile's own -R W y^3 at y_min.
  std::optional<double> core;

  void validate() const {
    if (cells < 16) throw Error(ErrorCode::InvalidArgument, "PdeConfig: cells must be >= 16");
    if (!(cfl > 0.0 && cfl <= 0.9)) throw Error(ErrorCode::InvalidArgument, "PdeConfig: cfl must lie in (0, 0.9]");
    if (!(tau_end >= 0.0)) throw Error(ErrorCode::InvalidArgument, "PdeConfig: tau_end must be >= 0");
  }
};

struct RadialField {
  std::vector<double> grid;
  std::vector<double> rho_hat;
  std::vector<double> u_hat;
  double tau = 0.0;
  PressureFlag pressure;
  double core = 0.0;
  std::size_t clip_count = 0;

  double dy() const { return grid[1] - grid[0]; }
  std::size_t size() const { return grid.size(); }
};

/// Samples the trace onto a uniform grid: rho_hat = R, u_hat = V = y (W + 1).
inline RadialField init_from_trace(const SolutionTrace& trace, const PdeConfig& cfg) {
  cfg.validate();
  if (trace.empty()) throw Error(ErrorCode::OutOfRange, "init_from_trace: empty trace");
  const double lo = cfg.y_min.value_or(trace.y_begin());
  const double hi = cfg.y_max.value_or(trace.y_end());
  const double slack = 1e-12 * std::max(1.0, trace.y_end());
  if (lo < trace.y_begin() - slack || hi > trace.y_end() + slack || !(hi > lo)) {
    throw Error(ErrorCode::OutOfRange, "init_from_trace: grid [" + std::to_string(lo) + ", " + std::to_string(hi) +
                                           "] not covered by the trace");
  }
  RadialField f;
  f.pressure = trace.pressure;
  const std::size_t n = cfg.cells;
  f.grid.resize(n);
  f.rho_hat.resize(n);
  f.u_hat.resize(n);
  const double h = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = i + 1 == n ? hi : lo + h * static_cast<double>(i);
    const auto s = interpolate(trace, y);
    f.grid[i] = y;
    f.rho_hat[i] = s.R;
    f.u_hat[i] = s.V();
  }
  f.core = cfg.core.value_or(gravity_similarity(interpolate(trace, lo)));
  return f;
}

/// Time derivatives of (rho_hat, u_hat) at every node; end nodes are held (Dirichlet) and get zero.
struct Tendency {
  std::vector<double> rho_hat;
  std::vector<double> u_hat;
  double flux_in = 0.0;   // mass flux m (u_hat - y) through the first interior face
  double flux_out = 0.0;  // ... through the last interior face
};

namespace detail {

inline void require_finite(const RadialField& f) {
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!std::isfinite(f.rho_hat[i]) || !std::isfinite(f.u_hat[i])) {
      throw Error(ErrorCode::NonFinite, "non-finite field value at node " + std::to_string(i));
    }
  }
}

}  // namespace detail

/// Discrete spatial operator: upwind convection, centred pressure and viscous terms, gravity from
/// the cumulative trapezoid of rho_hat y^2 plus the core term.
inline Tendency tendency(const RadialField& f) {
  const std::size_t n = f.size();
  const double h = f.dy();
  const double A = f.pressure.coefficient();
  Tendency out;
  out.rho_hat.assign(n, 0.0);
  out.u_hat.assign(n, 0.0);

  std::vector<double> m(n), c(n);
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = f.grid[i] * f.grid[i] * f.rho_hat[i];
    c[i] = f.u_hat[i] - f.grid[i];
  }
  // Face i holds the flux between nodes i and i+1.
  std::vector<double> flux(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double cf = 0.5 * (c[i] + c[i + 1]);
    flux[i] = cf * (cf > 0.0 ? m[i] : m[i + 1]);
  }
  out.flux_in = flux.front();
  out.flux_out = flux.back();

  double G = f.core;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double y = f.grid[i];
    G += 0.5 * h * (m[i - 1] + m[i]);

    const double dm = -(flux[i] - flux[i - 1]) / h - m[i];
    out.rho_hat[i] = dm / (y * y);

    const double u = f.u_hat[i];
    const double ul = f.u_hat[i - 1];
    const double ur = f.u_hat[i + 1];
    const double adv = c[i] > 0.0 ? c[i] * (u - ul) / h : c[i] * (ur - u) / h;
    const double rho = f.rho_hat[i];
    const double dlog = rho > 0.0 ? (f.rho_hat[i + 1] - f.rho_hat[i - 1]) / (2.0 * h * rho) : 0.0;
    const double uy = (ur - ul) / (2.0 * h);
    const double uyy = (ur - 2.0 * u + ul) / (h * h);
    const double visc = kViscousDiffusivity * (uyy + dlog * uy + 2.0 * uy / y - 2.0 * u / (y * y));
    out.u_hat[i] = -adv - A * dlog + visc - G / (y * y);
  }
  return out;
}

/// Largest stable step: convective and diffusive limits.
inline double stable_dt(const RadialField& f, double cfl) {
  const double h = f.dy();
  double vmax = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) vmax = std::max(vmax, std::abs(f.u_hat[i] - f.grid[i]));
  const double conv = h / (vmax + std::sqrt(f.pressure.coefficient()));
  const double diff = h * h / (2.0 * kViscousDiffusivity);
  return cfl * std::min(conv, diff);
}

struct StepInfo {
  double dt = 0.0;
  double flux_in = 0.0;
  double flux_out = 0.0;
  std::size_t clipped = 0;
};

/// One forward-Euler step with the dual CFL limit (optionally capped, e.g. to land on tau_end).
inline RadialField step(const RadialField& field, const PdeConfig& cfg, std::optional<double> dt_cap = std::nullopt,
                        StepInfo* info = nullptr) {
  detail::require_finite(field);
  double dt = stable_dt(field, cfg.cfl);
  if (dt_cap) dt = std::min(dt, *dt_cap);
  if (!std::isfinite(dt) || dt < 1e-14) throw Error(ErrorCode::CflViolation, "time step underflow");

  const auto k = tendency(field);
  RadialField next = field;
  std::size_t clipped = 0;
  for (std::size_t i = 1; i + 1 < field.size(); ++i) {
    double r = field.rho_hat[i] + dt * k.rho_hat[i];
    if (r < 0.0) {
      r = 0.0;
      ++clipped;
    }
    next.rho_hat[i] = r;
    next.u_hat[i] = field.u_hat[i] + dt * k.u_hat[i];
  }
  next.tau = field.tau + dt;
  next.clip_count = field.clip_count + clipped;
  detail::require_finite(next);
  if (info) *info = {dt, k.flux_in, k.flux_out, clipped};
  return next;
}

/// Steps until cfg.tau_end; on_step sees every new field.
inline RadialField evolve(RadialField field, const PdeConfig& cfg,
                          const std::function<void(const RadialField&)>& on_step = {}) {
  cfg.validate();
  while (field.tau < cfg.tau_end) {
    const double remaining = cfg.tau_end - field.tau;
    StepInfo info;
    field = step(field, cfg, remaining, &info);
    if (info.dt >= remaining) field.tau = cfg.tau_end;
    if (on_step) on_step(field);
  }
  return field;
}

/// Mass of the interior cells, sum of y^2 rho_hat dy over nodes 1..n-2.
inline double interior_mass(const RadialField& f) {
  double total = 0.0;
  for (std::size_t i = 1; i + 1 < f.size(); ++i) total += f.grid[i] * f.grid[i] * f.rho_hat[i];
  return total * f.dy();
}

struct DeviationNorms {
  double l2 = 0.0;
  double linf = 0.0;
};

/// Grid-weighted L2 and max norms of (rho_hat - R, u_hat - V) against the trace.
inline DeviationNorms deviation(const RadialField& f, const SolutionTrace& trace) {
  DeviationNorms d;
  double sum = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto s = interpolate(trace, f.grid[i]);
    const double dr = f.rho_hat[i] - s.R;
    const double du = f.u_hat[i] - s.V();
    const double w = (i == 0 || i + 1 == f.size()) ? 0.5 : 1.0;
    sum += w * (dr * dr + du * du);
    wsum += w;
    d.linf = std::max({d.linf, std::abs(dr), std::abs(du)});
  }
  d.l2 = std::sqrt(sum / wsum);
  return d;
}

/// Same weighted L2 norm applied to the operator's tendency.
inline double tendency_norm(const Tendency& k) {
  const std::size_t n = k.rho_hat.size();
  double sum = 0.0, wsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
    sum += w * (k.rho_hat[i] * k.rho_hat[i] + k.u_hat[i] * k.u_hat[i]);
    wsum += w;
  }
  return std::sqrt(sum / wsum);
}

/// Deviation of the grid's piecewise-linear reconstruction from the profile, sampled at cell midpoints:
/// the part of the initial deviation a nodal sampling cannot show.
inline DeviationNorms interpolation_deviation(const RadialField& f, const SolutionTrace& trace) {
  DeviationNorms d;
  double sum = 0.0;
  const std::size_t n = f.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const auto s = interpolate(trace, 0.5 * (f.grid[i] + f.grid[i + 1]));
    const double dr = 0.5 * (f.rho_hat[i] + f.rho_hat[i + 1]) - s.R;
    const double du = 0.5 * (f.u_hat[i] + f.u_hat[i + 1]) - s.V();
    sum += dr * dr + du * du;
    d.linf = std::max({d.linf, std::abs(dr), std::abs(du)});
  }
  d.l2 = std::sqrt(sum / static_cast<double>(n - 1));
  return d;
}

struct SteadyStateSolve {
  RadialField field;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;  // weighted L2 of the tendency at the returned field
};

/// Newton iteration for the discrete fixed point L_h[U] = 0 with the end nodes held. The Jacobian is
/// built by forward differences; it is dense because gravity couples every node to all inner ones.
inline SteadyStateSolve discrete_steady_state(const RadialField& start, int max_iter = 30, double rel_tol = 1e-12) {
  const std::size_t n = start.size();
  const Eigen::Index m = static_cast<Eigen::Index>(2 * (n - 2));
  auto pack = [&](const Tendency& k) {
    Eigen::VectorXd v(m);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      v[2 * (i - 1)] = k.rho_hat[i];
      v[2 * (i - 1) + 1] = k.u_hat[i];
    }
    return v;
  };
  auto slot = [](RadialField& f, Eigen::Index j) -> double& {
    const auto i = static_cast<std::size_t>(j / 2 + 1);
    return j % 2 == 0 ? f.rho_hat[i] : f.u_hat[i];
  };

  SteadyStateSolve out{start};
  Eigen::VectorXd F = pack(tendency(out.field));
  const double scale = std::sqrt(static_cast<double>(m));
  const double res0 = F.norm() / scale;
  out.residual = tendency_norm(tendency(out.field));
  Eigen::MatrixXd J(m, m);
  for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
    const double res = F.norm() / scale;
    if (!std::isfinite(res)) return out;
    if (res <= rel_tol * std::max(1.0, res0)) {
      out.converged = true;
      break;
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      RadialField probe = out.field;
      double& x = slot(probe, j);
      const double h = 1e-7 * std::max(1.0, std::abs(x));
      x += h;
      J.col(j) = (pack(tendency(probe)) - F) / h;
    }
    const Eigen::VectorXd d = J.partialPivLu().solve(-F);
    if (!d.allFinite()) return out;
    for (Eigen::Index j = 0; j < m; ++j) slot(out.field, j) += d[j];
    F = pack(tendency(out.field));
  }
  out.residual = tendency_norm(tendency(out.field));
  if (out.converged) {
    out.converged = std::all_of(out.field.rho_hat.begin(), out.field.rho_hat.end(), [](double r) { return r >= 0.0; });
  }
  return out;
}

/// Self-similarity probe: start on the profile, evolve to tau_end, compare.
/// Nodal sampling makes the initial deviation zero, so the reference is the larger of
///  - the interpolation deviation of the grid representation (cell midpoints), and
///  - the discretization deviation, the distance from the profile to the scheme's own fixed point.
/// A stable profile relaxes toward that fixed point and stays within a small multiple of the reference.
struct StationarityProbe {
  DeviationNorms initial;
  DeviationNorms interpolation;
  std::optional<DeviationNorms> discretization;  // empty if the fixed-point solve failed
  DeviationNorms final;
  double truncation_drift = 0.0;   // tau_end * |L_h[profile]|, undamped drift estimate
  double distance_to_steady = 0.0; // weighted L2 between the final field and the fixed point
  double reference = 0.0;
  double ratio = 0.0;  // final.l2 / reference
  std::size_t steps = 0;
  std::size_t clip_count = 0;
};

/// on_checkpoint sees the field at tau = 0, at every checkpoint inside (0, tau_end) and at tau_end.
inline StationarityProbe stationarity_probe(const SolutionTrace& trace, const PdeConfig& cfg,
                                            std::vector<double> checkpoints = {},
                                            const std::function<void(const RadialField&)>& on_checkpoint = {}) {
  StationarityProbe p;
  auto field = init_from_trace(trace, cfg);
  p.initial = deviation(field, trace);
  p.interpolation = interpolation_deviation(field, trace);
  p.truncation_drift = cfg.tau_end * tendency_norm(tendency(field));
  const auto steady = discrete_steady_state(field);
  if (steady.converged) p.discretization = deviation(steady.field, trace);
  p.reference = std::max({p.initial.l2, p.interpolation.l2, p.discretization ? p.discretization->l2 : 0.0});
  if (on_checkpoint) on_checkpoint(field);

  std::erase_if(checkpoints, [&](double c) { return !(c > 0.0 && c < cfg.tau_end); });
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());
  if (cfg.tau_end > 0.0) checkpoints.push_back(cfg.tau_end);
  for (double stop : checkpoints) {
    PdeConfig leg = cfg;
    leg.tau_end = stop;
    field = evolve(std::move(field), leg, [&](const RadialField&) { ++p.steps; });
    if (on_checkpoint) on_checkpoint(field);
  }
  p.final = deviation(field, trace);
  p.clip_count = field.clip_count;
  if (steady.converged) {
    double sum = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < field.size(); ++i) {
      const double w = (i == 0 || i + 1 == field.size()) ? 0.5 : 1.0;
      const double dr = field.rho_hat[i] - steady.field.rho_hat[i];
      const double du = field.u_hat[i] - steady.field.u_hat[i];
      sum += w * (dr * dr + du * du);
      wsum += w;
    }
    p.distance_to_steady = std::sqrt(sum / wsum);
  }
  p.ratio = p.reference > 0.0 ? p.final.l2 / p.reference : (p.final.l2 == 0.0 ? 0.0 : INFINITY);
  return p;
}

}  // namespace collapsar
