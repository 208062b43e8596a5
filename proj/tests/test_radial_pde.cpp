#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "collapsar/radial_pde.hpp"
#include "common.hpp"

using namespace collapsar;

namespace {

SolutionTrace exact_profile() {
  IntegratorConfig cfg;
  cfg.y_end = 5.0;
  cfg.h_max = 0.01;
  return integrate({0.05, -1.0, 0.0, 2.0 / 0.0025}, PressureFlag(1), cfg);
}

SolutionTrace figure1_profile() { return testing_support::figure1_trace(0, 5.0); }

PdeConfig grid(std::size_t cells, double tau_end = 1.0) {
  PdeConfig cfg;
  cfg.cells = cells;
  cfg.y_min = 0.05;
  cfg.y_max = 5.0;
  cfg.tau_end = tau_end;
  return cfg;
}

// RMS of the tendency over interior nodes in [a, b], away from the boundary layers.
double window_norm(const Tendency& k, const RadialField& f, double a, double b) {
  double s = 0.0;
  int n = 0;
  for (std::size_t i = 1; i + 1 < f.size(); ++i) {
    if (f.grid[i] < a || f.grid[i] > b) continue;
    s += k.rho_hat[i] * k.rho_hat[i] + k.u_hat[i] * k.u_hat[i];
    ++n;
  }
  return std::sqrt(s / n);
}

}  // namespace

TEST(PdeConfig, Validation) {
  PdeConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.cells = 15;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.cells = 16;
  cfg.cfl = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.cfl = 0.95;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.cfl = 0.9;
  EXPECT_NO_THROW(cfg.validate());
}

TEST(InitFromTrace, ExactProfile) {
  const auto f = init_from_trace(exact_profile(), grid(64));
  ASSERT_EQ(f.size(), 64u);
  EXPECT_EQ(f.grid.front(), 0.05);
  EXPECT_EQ(f.grid.back(), 5.0);
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_NEAR(f.rho_hat[i], 2.0 / (f.grid[i] * f.grid[i]), 1e-7 * f.rho_hat[i]);
    EXPECT_NEAR(f.u_hat[i], 0.0, 1e-9);
  }
  EXPECT_EQ(f.tau, 0.0);
  // -R W y^3 at y_min: 2/y^2 * y^3 = 2 y.
  EXPECT_NEAR(f.core, 0.1, 1e-8);
}

TEST(InitFromTrace, FigureOneDensityDecreases) {
  const auto f = init_from_trace(figure1_profile(), grid(400));
  for (std::size_t i = 1; i < f.size(); ++i) EXPECT_LT(f.rho_hat[i], f.rho_hat[i - 1]) << i;
}

TEST(InitFromTrace, GridOutsideTrace) {
  auto cfg = grid(64);
  cfg.y_max = 20.0;
  try {
    init_from_trace(exact_profile(), cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutOfRange);
  }
  cfg.y_max = 5.0;
  cfg.y_min = 0.01;
  EXPECT_THROW(init_from_trace(exact_profile(), cfg), Error);
}

TEST(InitFromTrace, CoreOverride) {
  auto cfg = grid(32);
  cfg.core = 1.0 / 3.0;
  EXPECT_EQ(init_from_trace(exact_profile(), cfg).core, 1.0 / 3.0);
}

TEST(Tendency, InteriorResidualConvergesOnExactProfile) {
  const auto tr = exact_profile();
  double prev = 0.0;
  for (std::size_t n : {200u, 400u, 800u}) {
    const auto f = init_from_trace(tr, grid(n));
    const double r = window_norm(tendency(f), f, 0.5, 4.5);
    if (prev > 0.0) {
      EXPECT_GE(prev / r, 3.5) << n;  // no upwinding when u = 0
    }
    prev = r;
  }
}

TEST(Tendency, InteriorResidualConvergesOnFigureOneProfile) {
  const auto tr = figure1_profile();
  double prev = 0.0;
  for (std::size_t n : {200u, 400u, 800u}) {
    const auto f = init_from_trace(tr, grid(n));
    const double r = window_norm(tendency(f), f, 0.5, 4.5);
    if (prev > 0.0) {
      EXPECT_GE(prev / r, 1.8) << n;
    }
    prev = r;
  }
}

TEST(Tendency, EndNodesAreHeld) {
  const auto f = init_from_trace(figure1_profile(), grid(64));
  const auto k = tendency(f);
  EXPECT_EQ(k.rho_hat.front(), 0.0);
  EXPECT_EQ(k.rho_hat.back(), 0.0);
  EXPECT_EQ(k.u_hat.front(), 0.0);
  EXPECT_EQ(k.u_hat.back(), 0.0);
}

TEST(Step, ExactProfileBarelyMoves) {
  const auto f = init_from_trace(exact_profile(), grid(400));
  StepInfo info;
  const auto g = step(f, grid(400), std::nullopt, &info);
  EXPECT_GT(info.dt, 0.0);
  EXPECT_EQ(g.tau, info.dt);
  double worst = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    worst = std::max(worst, std::abs(g.rho_hat[i] - f.rho_hat[i]) / f.rho_hat[i]);
    worst = std::max(worst, std::abs(g.u_hat[i] - f.u_hat[i]));
  }
  EXPECT_LE(worst, 10.0 * f.dy());
}

TEST(Step, VacuumStaysVacuum) {
  IntegratorConfig ic;
  ic.y_end = 5.0;
  const auto tr = integrate({0.05, -1.0, 0.0, 0.0}, PressureFlag(0), ic);
  auto f = init_from_trace(tr, grid(64, 0.2));
  f = evolve(f, grid(64, 0.2));
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_EQ(f.rho_hat[i], 0.0);
    EXPECT_NEAR(f.u_hat[i], 0.0, 1e-12);
  }
  EXPECT_EQ(f.clip_count, 0u);
}

TEST(Step, NonFiniteNode) {
  auto f = init_from_trace(exact_profile(), grid(32));
  f.u_hat[10] = NAN;
  try {
    step(f, grid(32));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonFinite);
  }
}

TEST(Step, TimeStepUnderflow) {
  const auto f = init_from_trace(exact_profile(), grid(32));
  try {
    step(f, grid(32), 1e-20);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CflViolation);
  }
}

TEST(Step, DualCflLimit) {
  const auto f = init_from_trace(figure1_profile(), grid(100));
  const double h = f.dy();
  double vmax = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) vmax = std::max(vmax, std::abs(f.u_hat[i] - f.grid[i]));
  const double dt = stable_dt(f, 0.4);
  EXPECT_LE(dt, 0.4 * h / vmax);
  EXPECT_LE(dt, 0.4 * h * h / (2.0 * kViscousDiffusivity));
  EXPECT_DOUBLE_EQ(dt, 0.4 * std::min(h / vmax, h * h / 4.0));
}

TEST(Step, MassBalance) {
  // Interior mass changes by dt (flux_in - flux_out - mass) exactly when nothing is clipped.
  auto f = init_from_trace(figure1_profile(), grid(200));
  for (int k = 0; k < 20; ++k) {
    StepInfo info;
    const auto g = step(f, grid(200), std::nullopt, &info);
    ASSERT_EQ(info.clipped, 0u);
    const double m0 = interior_mass(f), m1 = interior_mass(g);
    const double want = info.dt * (info.flux_in - info.flux_out - m0);
    EXPECT_NEAR(m1 - m0, want, 1e-12 * std::max(1.0, std::abs(m0)));
    f = g;
  }
}

TEST(Evolve, LandsOnTauEnd) {
  const auto f = evolve(init_from_trace(exact_profile(), grid(32, 0.05)), grid(32, 0.05));
  EXPECT_EQ(f.tau, 0.05);
}

TEST(Deviation, NodalInitIsZero) {
  const auto tr = figure1_profile();
  const auto f = init_from_trace(tr, grid(64));
  const auto d = deviation(f, tr);
  EXPECT_LE(d.l2, 1e-9);
  EXPECT_LE(d.linf, 1e-9);
  const auto mid = interpolation_deviation(f, tr);
  EXPECT_GT(mid.l2, 0.0);
}

TEST(Deviation, ReflectsDensityBump) {
  const auto tr = exact_profile();
  auto f = init_from_trace(tr, grid(64));
  double biggest = 0.0;
  for (std::size_t i = 20; i < 30; ++i) {
    biggest = std::max(biggest, 0.1 * f.rho_hat[i]);
    f.rho_hat[i] *= 1.1;
  }
  const auto d = deviation(f, tr);
  EXPECT_NEAR(d.linf, biggest, 1e-6 * biggest);
  EXPECT_GT(d.l2, 0.0);
  EXPECT_LT(d.l2, d.linf);
}

TEST(SteadyState, NewtonConverges) {
  const auto f = init_from_trace(exact_profile(), grid(48));
  const auto s = discrete_steady_state(f);
  EXPECT_TRUE(s.converged);
  EXPECT_LE(s.iterations, 10);
  EXPECT_LE(s.residual, 1e-9);
  EXPECT_EQ(s.field.rho_hat.front(), f.rho_hat.front());
  EXPECT_EQ(s.field.u_hat.back(), f.u_hat.back());
  // A fixed point does not move under the time stepper.
  const auto g = step(s.field, grid(48));
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g.rho_hat[i], s.field.rho_hat[i], 1e-9 * s.field.rho_hat[i]);
}

TEST(Probe, ExactProfileIsStable) {
  std::vector<double> seen;
  const auto p = stationarity_probe(exact_profile(), grid(64, 0.5), {0.25, 0.25, 2.0, -1.0},
                                    [&](const RadialField& f) { seen.push_back(f.tau); });
  EXPECT_EQ(seen, (std::vector<double>{0.0, 0.25, 0.5}));
  EXPECT_LE(p.initial.l2, 1e-9);
  ASSERT_TRUE(p.discretization);
  EXPECT_EQ(p.reference, std::max(p.interpolation.l2, p.discretization->l2));
  EXPECT_LE(p.ratio, 5.0);
  EXPECT_EQ(p.clip_count, 0u);
  EXPECT_GT(p.steps, 0u);
}

TEST(Probe, FigureOneDefaultResolution) {
  const auto p = stationarity_probe(figure1_profile(), grid(400));
  EXPECT_EQ(p.clip_count, 0u);
  ASSERT_TRUE(p.discretization);
  EXPECT_LE(p.ratio, 5.0);
  EXPECT_LE(p.distance_to_steady, 1e-6 * p.reference);
}
