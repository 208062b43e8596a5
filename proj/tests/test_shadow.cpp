#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "collapsar/shadow.hpp"
#include "common.hpp"

using namespace collapsar;
using testing_support::figure1_init;

namespace {

constexpr double kPi = std::numbers::pi;

// Integral of exp(1 - 1/(1 - s^2)) / t^2 over [0.5, 2], s = (t - 1.25) / 0.75; independent quadrature.
constexpr double kBumpOverT2 = 0.703829493532438318;
constexpr double kBumpArea = 0.905175241828407132;

SolutionTrace figure1_short(double eps = 0.01, int A = 0) {
  IntegratorConfig cfg;
  cfg.y_end = 1.0;
  return integrate(map_initial(figure1_init(eps)), PressureFlag(A), cfg);
}

CoreState balanced_core() { return solve_alpha(2.0, BetaProfile::constant_value(0.0), 1.0, 1.0, 2.0); }

SolutionTrace vacuum_trace(double eps = 0.01) {
  IntegratorConfig cfg;
  cfg.y_end = 1.0;
  return integrate({eps, -5.0, 100.0, 0.0}, PressureFlag(0), cfg);
}

}  // namespace

TEST(SolveAlpha, NuTwoGivesInverseCube) {
  const auto core = solve_alpha(2.0, BetaProfile::constant_value(0.3), 1.0, 1.0, 4.0);
  for (double t : {1.0, 1.5, 2.0, 3.7}) EXPECT_NEAR(core.alpha(t), std::pow(t, -3.0), 1e-15 * std::pow(t, -3.0));
}

TEST(SolveAlpha, NuOneZeroBeta) {
  const auto core = solve_alpha(1.0, BetaProfile::constant_value(0.0), 1.0, 1.0, 4.0);
  for (double t : {1.0, 2.0, 3.0}) EXPECT_NEAR(core.alpha(t), std::pow(t, -3.0), 1e-15);
}

TEST(SolveAlpha, NuOneInflowGivesInverseSixth) {
  const auto closed = solve_alpha(1.0, BetaProfile::constant_value(-1.0), 1.0, 1.0, 4.0);
  // Same beta but opaque, forcing the quadrature path.
  const auto numeric = solve_alpha(1.0, BetaProfile::function([](double) { return -1.0; }), 1.0, 1.0, 4.0);
  for (double t : {1.0, 1.3, 2.0, 3.9}) {
    EXPECT_NEAR(closed.alpha(t), std::pow(t, -6.0), 1e-15);
    EXPECT_NEAR(numeric.alpha(t), std::pow(t, -6.0), 1e-12 * std::pow(t, -6.0));
  }
}

TEST(SolveAlpha, BalanceOdeHoldsAtCheckpoints) {
  // Time-varying beta: check (t/3) alpha' + alpha (1 - beta) = 0 with a central difference of alpha.
  const auto core = solve_alpha(1.0, BetaProfile::function([](double t) { return 0.3 * std::sin(t); }), 2.0, 0.5, 3.0);
  for (int i = 0; i < 100; ++i) {
    const double t = 0.6 + 2.3 * i / 99.0;
    const double a = core.alpha(t);
    const double ode = t / 3.0 * core.alpha_rate(t) + a * core.balance_factor(t);
    EXPECT_LE(std::abs(ode), 1e-10 * a) << t;
    const double h = 1e-4 * t;
    const double fd = (core.alpha(t + h) - core.alpha(t - h)) / (2 * h);
    EXPECT_NEAR(fd, core.alpha_rate(t), 1e-6 * std::abs(core.alpha_rate(t)) + 1e-9) << t;
  }
}

TEST(SolveAlpha, RejectsBadInput) {
  EXPECT_THROW(solve_alpha(0.5, BetaProfile::constant_value(0.0), 1.0, 1.0, 2.0), Error);
  EXPECT_THROW(solve_alpha(2.0, BetaProfile::constant_value(0.0), 0.0, 1.0, 2.0), Error);
  EXPECT_THROW(solve_alpha(2.0, BetaProfile::constant_value(0.0), 1.0, 2.0, 1.0), Error);
}

TEST(CoreMass, ConstantForBalancedCore) {
  const auto core = balanced_core();
  for (double t : {0.5, 1.0, 1.7, 2.0}) EXPECT_NEAR(core_mass(core, t), 4.0 * kPi / 3.0, 1e-14);
  EXPECT_NEAR(core_mass(core, 1.0), 4.18879, 1e-5);
}

TEST(CoreMass, ScalesWithAlpha) {
  const auto core = solve_alpha(3.0, BetaProfile::constant_value(0.0), 2.0, 1.0, 2.0);
  EXPECT_NEAR(core_mass(core, 1.5), 8.0 * kPi / 3.0, 1e-14);
}

TEST(CoreMass, InflowCoreLosesMass) {
  const auto core = solve_alpha(1.0, BetaProfile::constant_value(-1.0), 1.0, 1.0, 4.0);
  double prev = core_mass(core, 1.0);
  for (double t : {1.5, 2.0, 3.0}) {
    const double m = core_mass(core, t);
    EXPECT_NEAR(m, 4.0 * kPi / 3.0 * std::pow(t, -3.0), 1e-14);
    EXPECT_LT(m, prev);
    prev = m;
  }
}

TEST(MassResidual, BalancedCore) {
  // eps^2 rho_1 u_1 = d1 v eps^2 / t^2 = 5 * (-4) * 1e-4.
  EXPECT_NEAR(mass_residual(balanced_core(), figure1_short(), 1.0), -0.002, 1e-14);
}

TEST(MassResidual, VanishesWithEps) {
  const auto core = balanced_core();
  double prev = 1.0;
  for (double eps : {1e-1, 1e-2, 1e-3, 1e-4}) {
    const double r = std::abs(mass_residual(core, figure1_short(eps), 1.0));
    EXPECT_NEAR(r, 20.0 * eps * eps, 1e-12 * eps * eps);
    EXPECT_LT(r, prev);
    prev = r;
  }
}

TEST(MassResidual, UnbalancedCoreKeepsDefect) {
  CoreState core;
  core.nu = 1.0;
  core.alpha = [](double) { return 1.0; };
  core.alpha_rate = [](double) { return 0.0; };
  EXPECT_NEAR(mass_residual(core, figure1_short(), 2.0), 1.0 - 0.0005, 1e-14);
}

TEST(MassResidual, UniformOnProbeSupport) {
  const auto core = balanced_core();
  const auto probe = WeakProbe::bump(0.5, 2.0);
  double prev = 1.0;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    const auto tr = figure1_short(eps);
    double sup = 0.0;
    for (double t : probe.checkpoints(10)) sup = std::max(sup, std::abs(mass_residual(core, tr, t)));
    EXPECT_LE(sup, 20.0 * eps * eps / 0.25);
    EXPECT_LT(sup, 0.02 * prev);
    prev = sup;
  }
}

TEST(MomentumResidual, FigureOne) {
  // eps d1 (v^2 eps^2 - v1) = 0.01 * 5 * (16e-4 + 5).
  EXPECT_NEAR(momentum_residual(balanced_core(), figure1_short(), 1.0), 0.25008, 1e-12);
  EXPECT_NEAR(momentum_residual(balanced_core(), figure1_short(), 2.0), 0.25008 / 4.0, 1e-12);
}

TEST(MomentumResidual, Vacuum) { EXPECT_EQ(momentum_residual(balanced_core(), vacuum_trace(), 1.0), 0.0); }

TEST(MomentumResidual, HalvesWithEps) {
  const double a = momentum_residual(balanced_core(), figure1_short(0.01), 1.0);
  const double b = momentum_residual(balanced_core(), figure1_short(0.005), 1.0);
  EXPECT_NEAR(b / a, 0.5, 0.025);
}

TEST(MomentumResidual, BalancedVelocityBranchIsNotAnAdmissibleStart) {
  // u_1^2 = t d_r u_1 on the cone cancels the momentum residual identically, but it needs v1 = v^2 eps^2 > 0.
  const double eps = 0.01, v = -4.0, v1 = v * v * eps * eps, d1 = 5.0;
  const auto tr = testing_support::synthetic({{eps, v - 1.0, (v1 - v) / eps, d1 / eps}});
  EXPECT_NEAR(momentum_residual(balanced_core(), tr, 1.0), 0.0, 1e-15);
  EXPECT_THROW(map_initial({v, v1, d1, eps}), Error);
}

TEST(CoreDensityRatio, VanishesLikeEpsSquared) {
  const auto core = balanced_core();
  for (double eps : {1e-1, 1e-2, 1e-3}) {
    EXPECT_NEAR(core_density_ratio(core, figure1_short(eps), 1.0), 5.0 * eps * eps, 1e-12 * eps * eps);
  }
}

TEST(WeakProbe, BumpShape) {
  const auto p = WeakProbe::bump(0.5, 2.0);
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(p.phi(0.5), 0.0);
  EXPECT_EQ(p.phi(2.0), 0.0);
  EXPECT_DOUBLE_EQ(p.phi(1.25), 1.0);
  EXPECT_NEAR(p.integrate([](double) { return 1.0; }), kBumpArea, 1e-8);
  const auto cp = p.checkpoints(10);
  ASSERT_EQ(cp.size(), 10u);
  EXPECT_GT(cp.front(), 0.5);
  EXPECT_LT(cp.back(), 2.0);
}

TEST(WeakProbe, Validation) {
  auto p = WeakProbe::bump(0.5, 2.0);
  p.t_a = 0.0;
  EXPECT_THROW(p.validate(), Error);
  auto q = WeakProbe::bump(2.0, 1.0);
  EXPECT_THROW(q.validate(), Error);
  WeakProbe r{[](double) { return 1.0; }, 0.5, 2.0, 200};
  EXPECT_THROW(r.validate(), Error);
  auto s = WeakProbe::bump(0.5, 2.0, 1);
  EXPECT_THROW(s.validate(), Error);
}

TEST(WeakProbe, TestedResiduals) {
  const auto probe = WeakProbe::bump(0.5, 2.0);
  const auto tr = figure1_short();
  EXPECT_NEAR(weak_mass_residual(probe, balanced_core(), tr), -0.002 * kBumpOverT2, 1e-10);
  EXPECT_NEAR(weak_momentum_residual(probe, balanced_core(), tr), 0.25008 * kBumpOverT2, 1e-8);
}

TEST(FitScaling, Validation) {
  EXPECT_THROW(fit_scaling({0.1, 0.01}, {1, 2}), Error);
  EXPECT_THROW(fit_scaling({0.1, 0.01, 0.001}, {1, 2}), Error);
  EXPECT_THROW(fit_scaling({0.1, 0.01, 0.01}, {1, 2, 3}), Error);
  EXPECT_THROW(fit_scaling({0.01, 0.1, 1.0}, {1, 2, 3}), Error);
}

TEST(FitScaling, ExactPowerLaw) {
  const auto f = fit_scaling({1e-1, 1e-2, 1e-3}, {-3e-2, -3e-4, -3e-6});
  EXPECT_NEAR(f.slope, 2.0, 1e-12);
  EXPECT_LE(f.fit_residual, 1e-12);
  EXPECT_EQ(f.magnitudes.front(), -3e-2);
}

TEST(AdmissibilityScaling, FigureOneSweep) {
  for (int A : {0, 1}) {
    const auto sw = admissibility_scaling(figure1_init(), {1e-1, 1e-2, 1e-3, 1e-4}, PressureFlag(A));
    ASSERT_FALSE(sw.aborted);
    ASSERT_EQ(sw.points.size(), 4u);
    EXPECT_NEAR(sw.u1->slope, 1.0, 1e-12);
    EXPECT_NEAR(sw.rho1->slope, -1.0, 1e-12);
    EXPECT_NEAR(sw.mass->slope, 2.0, 0.1);
    EXPECT_NEAR(sw.momentum->slope, 1.0, 0.1);
    for (const auto* f : {&*sw.u1, &*sw.rho1, &*sw.mass, &*sw.momentum}) EXPECT_LE(f->fit_residual, 0.05);
  }
}

TEST(AdmissibilityScaling, ParallelMatchesSerial) {
  SweepOptions serial, parallel;
  parallel.jobs = 4;
  parallel.keep_traces = true;
  const std::vector<double> eps = {1e-1, 1e-2, 1e-3};
  const auto a = admissibility_scaling(figure1_init(), eps, PressureFlag(0), serial);
  const auto b = admissibility_scaling(figure1_init(), eps, PressureFlag(0), parallel);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].mass_res, b.points[i].mass_res);
    EXPECT_EQ(a.points[i].mom_res, b.points[i].mom_res);
  }
  EXPECT_TRUE(a.traces.empty());
  ASSERT_EQ(b.traces.size(), 3u);
  EXPECT_EQ(b.traces[1].front().y, 1e-2);
}

TEST(AdmissibilityScaling, NeedsThreePoints) {
  EXPECT_THROW(admissibility_scaling(figure1_init(), {1e-1, 1e-2}, PressureFlag(0)), Error);
}

TEST(AdmissibilityScaling, AbortsOnFailedMember) {
  SweepOptions opt;
  opt.integrator.max_steps = 20;
  const auto sw = admissibility_scaling(figure1_init(), {1e-1, 1e-2, 1e-3}, PressureFlag(0), opt);
  EXPECT_TRUE(sw.aborted);
  EXPECT_FALSE(sw.mass);
}

TEST(InviscidAdmissibility, SelfSimilarDataVanish) {
  std::vector<double> eps = {1e-1, 1e-2, 1e-3}, vals;
  for (double e : eps) {
    vals.push_back(inviscid_admissibility(figure1_short(e)));
    EXPECT_NEAR(vals.back(), 5.0 * 16.0 * e * e, 1e-12 * e * e);
  }
  const auto v = inviscid_bounded(eps, vals);
  EXPECT_TRUE(v.passed);
  EXPECT_NEAR(*v.slope, 2.0, 1e-9);
}

TEST(InviscidAdmissibility, VacuumIsBounded) {
  EXPECT_EQ(inviscid_admissibility(vacuum_trace()), 0.0);
  EXPECT_TRUE(inviscid_bounded({1e-1, 1e-2, 1e-3}, {0.0, 0.0, 0.0}).passed);
}

TEST(InviscidAdmissibility, DivergentSweepFails) {
  // rho_1 ~ eps^-3 with u_1 ~ 1 gives eps rho_1 u_1^2 ~ eps^-2.
  std::vector<double> eps = {1e-1, 1e-2, 1e-3}, vals;
  for (double e : eps) {
    const auto tr = testing_support::synthetic({{e, 1.0 / e - 1.0, 0.0, std::pow(e, -3.0)}});
    vals.push_back(inviscid_admissibility(tr));
  }
  const auto v = inviscid_bounded(eps, vals);
  EXPECT_FALSE(v.passed);
  EXPECT_NEAR(*v.slope, -2.0, 1e-9);
  EXPECT_FALSE(inviscid_bounded({1e-1, 1e-2}, {1.0, NAN}).passed);
}
