#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "uqcont/orbits.hpp"

namespace uqcont {
namespace {

constexpr double kPi = std::numbers::pi;

TEST(PeriodicityResidual, StuartLandauComponentsVanishOnCycle) {
  const TwoModeOscillator model;
  const double omega = 1.3;
  const Vec p = two_mode_parameters(testing::row_4a(), omega).values;
  for (double phase : {0.0, 0.7, 2.5}) {
    Vec x0 = Vec::Zero(6);
    x0(4) = std::sin(phase);
    x0(5) = std::cos(phase);
    const Vec r = periodicity_residual(model, p, x0, 2 * kPi / omega, {});
    EXPECT_LT(r.tail(2).norm(), 1e-8);
  }
}

TEST(PeriodicityResidual, RestStateOfUnforcedModel) {
  const TwoModeOscillator model;
  auto row = testing::row_4a();
  row.F1 = row.F2 = 0;
  row.c1 = row.c2 = row.c3 = 0;
  const Vec p = two_mode_parameters(row, 1.0).values;
  const Vec x0 = Vec::Zero(6);
  EXPECT_EQ(model.rhs(x0, p).norm(), 0.0);
  EXPECT_LT(periodicity_residual(model, p, x0, 3.7, {}).norm(), 1e-15);
}

TEST(PhaseResidual, CoordinateMetricIsVelocity) {
  const TwoModeOscillator model;
  const Vec p = two_mode_parameters(testing::row_4a(), 1.0).values;
  Vec x0(6);
  x0 << 0.2, 0.0, -0.1, 0.3, 0.0, 1.0;
  EXPECT_EQ(phase_residual(model, CoordinateMetric(0, "q1"), p, x0), 0.0);
  EXPECT_DOUBLE_EQ(phase_residual(model, CoordinateMetric(2, "q2"), p, x0), 0.3);
}

TEST(PhaseResidual, GradientsMatchFiniteDifferences) {
  const TwoModeOscillator model;
  const CoordinateMetric metric(2, "q2");
  const Vec p = two_mode_parameters(testing::row_4b(), 1.1).values;
  Vec x0(6);
  x0 << 0.2, -0.4, 0.5, 0.3, 0.6, 0.8;
  const Vec gx = phase_residual_state_gradient(model, metric, p, x0);
  const Vec gp = phase_residual_param_gradient(model, metric, p, x0);
  const double d = 1e-6;
  for (int i = 0; i < 6; ++i) {
    Vec a = x0, b = x0;
    a(i) += d;
    b(i) -= d;
    EXPECT_NEAR(gx(i), (phase_residual(model, metric, p, a) - phase_residual(model, metric, p, b)) / (2 * d), 1e-7);
  }
  for (int i = 0; i < p.size(); ++i) {
    Vec a = p, b = p;
    a(i) += d;
    b(i) -= d;
    EXPECT_NEAR(gp(i), (phase_residual(model, metric, a, x0) - phase_residual(model, metric, b, x0)) / (2 * d), 1e-7);
  }
}

TEST(SolvePeriodicOrbit, DuffingAgainstTimeMarching) {
  const DuffingOscillator model;
  const CoordinateMetric metric(0, "q");
  const double omega = 2.0;
  const Vec p = testing::duffing_reference(omega).values;
  const auto res = solve_forced_orbit(model, metric, p, omega, {});
  ASSERT_TRUE(res.converged()) << res.message;
  EXPECT_LT(res.orbit.residual_norm, 1e-10);

  // Oracle: amplitude of the steady state reached by plain time marching.
  const double period = 2 * kPi / omega;
  Vec x(4);
  x << 0, 0, 0, 1;
  x = integrate_state(model, p, x, 300 * period, {}).x_T;
  IntegrationSettings dense;
  dense.dense_output = true;
  const auto last = integrate_state(model, p, x, period, dense);
  double amp = 0;
  for (const auto& s : last.trajectory.states) amp = std::max(amp, std::abs(s(0)));
  EXPECT_NEAR(std::abs(res.orbit.metric_value), amp, 0.05 * amp);
}

TEST(SolvePeriodicOrbit, RestartFromConvergedOrbit) {
  const DuffingOscillator model;
  const CoordinateMetric metric(0, "q");
  const Vec p = testing::duffing_reference(2.0).values;
  const auto first = solve_forced_orbit(model, metric, p, 2.0, {});
  ASSERT_TRUE(first.converged());
  const auto again = solve_periodic_orbit(model, metric, p, first.orbit.x0, first.orbit.period, {});
  ASSERT_TRUE(again.converged());
  EXPECT_LE(again.iterations, 1);
}

TEST(SolvePeriodicOrbit, OffResonancePeriodPinnedByForcing) {
  const TwoModeOscillator model;
  const CoordinateMetric metric(0, "q1");
  const double omega = 0.5;
  const Vec p = two_mode_parameters(testing::row_4a(), omega).values;
  const auto res = solve_forced_orbit(model, metric, p, omega, {});
  ASSERT_TRUE(res.converged()) << res.message;
  EXPECT_NEAR(res.orbit.period / (2 * kPi / omega), 1.0, 1e-8);
  EXPECT_LT(std::abs(phase_residual(model, metric, p, res.orbit.x0)), 1e-10);
  EXPECT_GT(res.orbit.metric_value, 0.0);
}

TEST(SolvePeriodicOrbit, TrivialFloquetMultiplierAndLiouville) {
  const TwoModeOscillator model;
  const CoordinateMetric metric(2, "q2");
  const double omega = 1.0;
  const Vec p = two_mode_parameters(testing::row_4b(), omega).values;
  const auto res = solve_forced_orbit(model, metric, p, omega, {});
  ASSERT_TRUE(res.converged()) << res.message;
  const Vec f = model.rhs(res.orbit.x0, p);
  EXPECT_LE(((res.orbit.monodromy - Mat::Identity(6, 6)) * f).norm(), 1e-6 * f.norm());
}

TEST(SolvePeriodicOrbit, ReportsNonConvergenceWithBestIterate) {
  const DuffingOscillator model;
  const CoordinateMetric metric(0, "q");
  const Vec p = testing::duffing_reference(1.0).values;
  Vec guess(4);
  guess << 50.0, 0.0, 0.0, 1.0;
  NewtonSettings newton;
  newton.max_iterations = 2;
  const auto res = solve_periodic_orbit(model, metric, p, guess, 2 * kPi, {}, newton);
  EXPECT_FALSE(res.converged());
  EXPECT_FALSE(res.message.empty());
  EXPECT_EQ(res.orbit.x0.size(), 4);
}

}  // namespace
}  // namespace uqcont
