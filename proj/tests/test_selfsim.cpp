#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include "collapsar/ode_engine.hpp"
#include "collapsar/selfsim.hpp"
#include "common.hpp"

using namespace collapsar;
using testing_support::figure1_init;

TEST(PressureFlag, AcceptsOnlyZeroAndOne) {
  EXPECT_EQ(PressureFlag(0).value(), 0);
  EXPECT_EQ(PressureFlag(1).coefficient(), 1.0);
  EXPECT_TRUE(PressureFlag::isothermal().isothermal_law());
  try {
    PressureFlag bad(2);
    FAIL() << "expected InvalidArgument";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
}

TEST(Rhs, ExactIsothermalStateIsStationary) {
  const auto d = rhs({2.0, -1.0, 0.0, 0.5}, PressureFlag(1));
  EXPECT_EQ(d.dW, 0.0);
  EXPECT_EQ(d.dWp, 0.0);
  EXPECT_DOUBLE_EQ(d.dR, -0.5);
}

TEST(Rhs, VacuumHasNoDensityChange) {
  const auto d = rhs({1.0, -2.0, 0.0, 0.0}, PressureFlag(0));
  EXPECT_EQ(d.dR, 0.0);
}

TEST(Rhs, FigureOneInitialPoint) {
  const auto d = rhs({0.01, -5.0, -100.0, 500.0}, PressureFlag(0));
  EXPECT_NEAR(d.dR, -150000.0, 1e-9 * 150000.0);
  EXPECT_NEAR(d.dWp, -108737.5, 1e-9 * 108737.5);
  EXPECT_EQ(d.dW, -100.0);
  // Closed form of R' at the core surface: -(d1/eps)(v1 + 2(v - 1))/((v - 1) eps).
  const double v = -4.0, v1 = -5.0, d1 = 5.0, eps = 0.01;
  EXPECT_NEAR(d.dR, -(d1 / eps) * (v1 + 2.0 * (v - 1.0)) / ((v - 1.0) * eps), 1e-9);
}

TEST(Rhs, ExactSolutionFamilyToMachinePrecision) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> ys(0.01, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const double y = ys(gen);
    const auto d = rhs({y, -1.0, 0.0, 2.0 / (y * y)}, PressureFlag(1));
    EXPECT_LE(std::abs(d.dWp), 1e-12 * (1.0 + 2.0 / (y * y)));
    EXPECT_NEAR(d.dR, -4.0 / (y * y * y), 1e-13 * 4.0 / (y * y * y));
  }
}

TEST(Rhs, RepeatedCallsAreBitIdentical) {
  const SimilarityState s{0.37, -2.3, -4.1, 7.9};
  const auto a = rhs(s, PressureFlag(1));
  const auto b = rhs(s, PressureFlag(1));
  EXPECT_EQ(std::memcmp(&a, &b, sizeof a), 0);
}

TEST(Rhs, ThrowsAtBreakdownThreshold) {
  for (const SimilarityState s : {SimilarityState{1.0, 0.0, 1.0, 1.0}, SimilarityState{1.0, 1e-13, 1.0, 1.0},
                                  SimilarityState{1e-13, -1.0, 0.0, 1.0}}) {
    try {
      rhs(s, PressureFlag(0));
      FAIL() << "expected SingularEvaluation";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::SingularEvaluation);
    }
  }
  EXPECT_NO_THROW(rhs({1.0, 1e-11, 1.0, 1.0}, PressureFlag(0)));
}

TEST(Rhs, ExplicitFormSatisfiesImplicitSystem) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> y(0.01, 5.0), W(-20.0, -0.4), Wp(-50.0, 50.0), R(0.0, 100.0);
  for (int i = 0; i < 500; ++i) {
    const SimilarityState s{y(gen), W(gen), Wp(gen), R(gen)};
    for (int A : {0, 1}) {
      const auto d = rhs(s, PressureFlag(A));
      const auto r = implicit_residual(s, d.dR, d.dWp, PressureFlag(A));
      EXPECT_LE(r.mass, 1e-14);
      EXPECT_LE(r.momentum, 1e-13);
    }
  }
}

TEST(Rhs, CriticalPointIdentityForHPrime) {
  // Where H = 0 the system gives H' = W''y + 4W' = (1/2) W y (-2W - R) for either pressure law.
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> y(0.05, 5.0), W(-10.0, -0.5), R(0.0, 30.0);
  for (int i = 0; i < 500; ++i) {
    SimilarityState s{y(gen), W(gen), 0.0, R(gen)};
    s.Wp = -(3.0 * s.W + 1.0) / s.y;
    for (int A : {0, 1}) {
      const auto d = rhs(s, PressureFlag(A));
      const double Hp = d.dWp * s.y + 4.0 * s.Wp;
      const double expected = 0.5 * s.W * s.y * (-2.0 * s.W - s.R);
      EXPECT_NEAR(Hp, expected, 1e-9 * (1.0 + std::abs(expected)));
    }
  }
}

TEST(Rhs, CriticalPointIdentityByFiniteDifferences) {
  // Same identity measured along an integrated trajectory starting on H = 0.
  const double y0 = 0.5, W0 = -2.0, R0 = 3.0;
  const SimilarityState s0{y0, W0, -(3.0 * W0 + 1.0) / y0, R0};
  ASSERT_NEAR(H(s0), 0.0, 1e-15);
  const double h = 1e-4;
  const auto tr = fixed_step_rk4(s0, PressureFlag(1), h, y0 + 4 * h);
  // Forward five-point first derivative of H at y0.
  const double c[5] = {-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -0.25};
  double Hp = 0.0;
  for (int k = 0; k < 5; ++k) Hp += c[k] * H(tr.samples[static_cast<std::size_t>(k)]) / h;
  const double expected = 0.5 * W0 * y0 * (-2.0 * W0 - R0);
  EXPECT_NEAR(Hp, expected, 1e-3 * std::abs(expected));
}

TEST(MapInitial, Examples) {
  const auto s = map_initial(figure1_init());
  EXPECT_DOUBLE_EQ(s.y, 0.01);
  EXPECT_DOUBLE_EQ(s.W, -5.0);
  EXPECT_DOUBLE_EQ(s.Wp, -100.0);
  EXPECT_DOUBLE_EQ(s.R, 500.0);

  const auto a = map_initial({-1.0, -1.0, 1.0, 0.1});
  EXPECT_EQ(a.W, -2.0);
  EXPECT_EQ(a.Wp, 0.0);
  EXPECT_DOUBLE_EQ(a.R, 10.0);

  const auto b = map_initial({-2.0, -4.0, 2.0, 0.1});
  EXPECT_EQ(b.W, -3.0);
  EXPECT_DOUBLE_EQ(b.Wp, -20.0);
  EXPECT_DOUBLE_EQ(b.R, 20.0);
}

TEST(MapInitial, RejectsInvalidData) {
  for (const PhysicalInit bad : {PhysicalInit{-4, -5, 5, 0.0}, PhysicalInit{-4, -5, 5, -1e-3}, PhysicalInit{1, -5, 5, 0.01},
                                 PhysicalInit{-4, 0, 5, 0.01}, PhysicalInit{-4, -5, 0, 0.01},
                                 PhysicalInit{-4, -5, NAN, 0.01}}) {
    EXPECT_TRUE(bad.violation().has_value());
    EXPECT_THROW(map_initial(bad), Error);
  }
}

TEST(MapInitial, IncreasingStartIsFlaggedNotRejected) {
  const PhysicalInit init{-4.0, -3.0, 5.0, 0.01};
  EXPECT_TRUE(init.increasing_start());
  EXPECT_FALSE(figure1_init().increasing_start());
  EXPECT_GT(map_initial(init).Wp, 0.0);
}

TEST(HFunction, Examples) {
  EXPECT_EQ(H({1.0, -1.0, 0.0, 0.0}), -2.0);
  EXPECT_NEAR(H({1.0, -1.0 / 3.0, 0.0, 0.0}), 0.0, 1e-16);
  EXPECT_DOUBLE_EQ(H({0.01, -5.0, -100.0, 0.0}), -15.0);
}

TEST(Reconstruct, Examples) {
  for (double y : {0.1, 1.0, 7.0}) {
    for (double t : {0.5, 3.0}) EXPECT_EQ(reconstruct({y, -1.0, 0.0, 1.0}, t).u, 0.0);
  }
  const auto p = reconstruct({0.01, -5.0, -100.0, 500.0}, 1.0);
  EXPECT_DOUBLE_EQ(p.u, -0.04);
  EXPECT_DOUBLE_EQ(p.rho, 500.0);
  EXPECT_DOUBLE_EQ(p.r, 0.01);
  const auto q = reconstruct({2.0, -1.0, 0.0, 0.5}, 2.0);
  EXPECT_EQ(q.u, 0.0);
  EXPECT_DOUBLE_EQ(q.rho, 0.125);
  EXPECT_DOUBLE_EQ(q.r, 4.0);
  EXPECT_THROW(reconstruct({1.0, -1.0, 0.0, 1.0}, 0.0), Error);
}

TEST(Reconstruct, RecoversSurfaceData) {
  for (double eps : {0.1, 0.01, 0.001}) {
    const PhysicalInit init{-3.0, -7.0, 2.5, eps};
    const auto p = reconstruct(map_initial(init), 1.0);
    EXPECT_NEAR(p.u, init.v_tilde * eps, 1e-15);
    EXPECT_NEAR(p.rho, init.d1 / eps, 1e-12 * init.d1 / eps);
    EXPECT_DOUBLE_EQ(p.r, eps);
  }
}

TEST(GravitySimilarity, Examples) {
  EXPECT_EQ(gravity_similarity({0.7, -3.0, 1.0, 0.0}), 0.0);
  EXPECT_DOUBLE_EQ(gravity_similarity({1.0, -1.0, 0.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(gravity_similarity({3.0, -1.0, 0.0, 2.0 / 9.0}), 6.0);
}

TEST(GravityQuadrature, VacuumIsZero) {
  IntegratorConfig cfg;
  cfg.y_end = 1.0;
  const auto tr = integrate({0.1, -1.0, 0.0, 0.0}, PressureFlag(0), cfg);
  EXPECT_EQ(gravity_quadrature(tr, 0.7, 0.0), 0.0);
}

TEST(GravityQuadrature, ExactIsothermalTrace) {
  const auto tr = testing_support::exact_trace();
  EXPECT_NEAR(gravity_quadrature(tr, 1.0, 2.0 * 0.1), 2.0, 1e-8);
  // Default core term is -R W y^3 at the first sample, i.e. 2 * 0.1.
  EXPECT_NEAR(gravity_quadrature(tr, 1.0), 2.0, 1e-8);
  EXPECT_NEAR(gravity_quadrature(tr, 7.5), 15.0, 1e-7);
}

TEST(GravityQuadrature, FigureOneIdentity) {
  const auto tr = testing_support::figure1_trace(0, 5.0);
  const double gs = gravity_similarity(interpolate(tr, 0.5));
  EXPECT_LE(std::abs(gravity_quadrature(tr, 0.5) - gs), 1e-4 * std::abs(gs));
}

TEST(GravityQuadrature, ConvergesUnderRefinement) {
  // Fixed-step traces: the identity defect shrinks at the quadrature/integration order.
  const SimilarityState s0{1.0, -1.5, -0.2, 1.2};
  std::vector<double> err;
  for (double h : {0.1, 0.05, 0.025}) {
    const auto tr = fixed_step_rk4(s0, PressureFlag(1), h, 3.0);
    const double gs = gravity_similarity(tr.back());
    err.push_back(std::abs(gravity_quadrature(tr, 3.0) - gs));
  }
  EXPECT_GT(err[0] / err[1], 8.0);
  EXPECT_GT(err[1] / err[2], 8.0);
}

TEST(GravityQuadrature, OutOfRange) {
  const auto tr = testing_support::exact_trace();
  try {
    gravity_quadrature(tr, 11.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutOfRange);
  }
  EXPECT_THROW(gravity_quadrature(tr, 0.05), Error);
}

TEST(Interpolate, ReproducesSamplesAndRejectsOutside) {
  const auto tr = testing_support::figure1_trace(0, 1.0);
  for (std::size_t i = 0; i < tr.size(); i += 97) {
    const auto s = interpolate(tr, tr.samples[i].y);
    EXPECT_DOUBLE_EQ(s.W, tr.samples[i].W);
    EXPECT_DOUBLE_EQ(s.R, tr.samples[i].R);
  }
  EXPECT_THROW(interpolate(tr, 1.5), Error);
  EXPECT_THROW(interpolate(SolutionTrace{}, 1.0), Error);
}
