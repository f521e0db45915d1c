#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "uqcont/sensitivity.hpp"

namespace uqcont {
namespace {

// Re-solves the orbit at realized parameters; the oracle for every
// sensitivity check below.
struct Resolver {
  const SystemModel& model;
  const Metric& metric;
  ParameterSet reference;
  UncertaintyMap map;
  IntegrationSettings settings{1e-12, 1e-14, 1'000'000, false};

  PeriodicOrbit solve(const Vec& eps, const PeriodicOrbit* from) const {
    const Vec p = apply_uncertainty(reference, map, eps).p;
    OrbitSolveResult res = from ? solve_periodic_orbit(model, metric, p, from->x0, from->period, settings)
                                : solve_forced_orbit(model, metric, p, reference.lambda(), settings);
    EXPECT_TRUE(res.converged()) << res.message;
    return res.orbit;
  }
};

UncertaintyMap map_of(std::initializer_list<const char*> names) {
  UncertaintyMap map;
  for (const char* n : names) map.entries.push_back({n, UncertaintyKind::proportional});
  return map;
}

class DuffingSensitivity : public ::testing::TestWithParam<double> {};

TEST_P(DuffingSensitivity, MatchesReSolvedOrbits) {
  const double omega = GetParam();
  const DuffingOscillator model;
  const CoordinateMetric metric(0, "q");
  const Resolver oracle{model, metric, testing::duffing_reference(omega), map_of({"c", "F"})};
  const Vec eps0 = Vec::Zero(2);
  const PeriodicOrbit orbit = oracle.solve(eps0, nullptr);
  const auto real = apply_uncertainty(oracle.reference, oracle.map, eps0);
  const auto sens = solve_initial_sensitivity(orbit, model, metric, real.dp_deps, oracle.settings);
  const Vec grad = metric_uncertainty_gradient(metric, orbit.x0, orbit.p, sens.S0, real.dp_deps);

  const double d = 1e-5;
  for (int m = 0; m < 2; ++m) {
    Vec ep = eps0, em = eps0;
    ep(m) += d;
    em(m) -= d;
    const PeriodicOrbit a = oracle.solve(ep, &orbit);
    const PeriodicOrbit b = oracle.solve(em, &orbit);
    const Vec fd_x0 = (a.x0 - b.x0) / (2 * d);
    const double fd_g = (a.metric_value - b.metric_value) / (2 * d);
    EXPECT_LT((fd_x0 - sens.S0.col(m)).norm(), 1e-5 * fd_x0.norm()) << "component " << m;
    EXPECT_NEAR(grad(m), fd_g, 1e-5 * std::abs(fd_g)) << "component " << m;
    EXPECT_NEAR(sens.dT(m), 0.0, 1e-8);
  }
}

INSTANTIATE_TEST_SUITE_P(Frequencies, DuffingSensitivity, ::testing::Values(0.8, 2.0));

TEST(Sensitivity, ForcingRaisesAmplitudeAtPeak) {
  const DuffingOscillator model;
  const CoordinateMetric metric(0, "q");
  const double omega = 1.1;
  const auto reference = testing::duffing_reference(omega);
  const auto map = map_of({"c", "F"});
  const auto res = solve_forced_orbit(model, metric, reference.values, omega, {});
  ASSERT_TRUE(res.converged());
  const auto real = apply_uncertainty(reference, map, Vec::Zero(2));
  const auto sens = solve_initial_sensitivity(res.orbit, model, metric, real.dp_deps, {});
  const Vec grad = metric_uncertainty_gradient(metric, res.orbit.x0, res.orbit.p, sens.S0, real.dp_deps);
  EXPECT_GT(grad(1), 0.0);
  EXPECT_LT(grad(0), 0.0);
}

TEST(Sensitivity, DummyParameterHasZeroColumns) {
  const TwoModeOscillator model;
  const CoordinateMetric metric(0, "q1");
  auto row = testing::row_4a();
  row.alpha2 = 0.0;  // realized alpha2 stays 0 under proportional uncertainty
  const auto reference = two_mode_parameters(row, 0.8);
  const auto map = map_of({"k1", "alpha2"});
  const auto res = solve_forced_orbit(model, metric, reference.values, 0.8, {});
  ASSERT_TRUE(res.converged());
  const auto real = apply_uncertainty(reference, map, Vec::Zero(2));
  const auto sens = solve_initial_sensitivity(res.orbit, model, metric, real.dp_deps, {});
  EXPECT_LT(sens.S0.col(1).norm(), 1e-10);
  EXPECT_LT(std::abs(sens.dT(1)), 1e-10);
  const Vec grad = metric_uncertainty_gradient(metric, res.orbit.x0, res.orbit.p, sens.S0, real.dp_deps);
  EXPECT_EQ(grad(1), 0.0);
}

TEST(Sensitivity, BorderedSolveConsistencyAndLinearity) {
  const TwoModeOscillator model;
  const CoordinateMetric metric(2, "q2");
  const auto reference = two_mode_parameters(testing::row_4b(), 1.0);
  const auto map = map_of({"c1", "F1"});
  const auto res = solve_forced_orbit(model, metric, reference.values, 1.0, {});
  ASSERT_TRUE(res.converged());
  const auto real = apply_uncertainty(reference, map, Vec::Zero(2));
  const auto aug = integrate_augmented(model, res.orbit.p, res.orbit.x0, res.orbit.period, real.dp_deps, {});
  const auto sens = solve_initial_sensitivity(model, metric, res.orbit.p, res.orbit.x0, aug.x_T, aug.monodromy,
                                              aug.sensitivity, real.dp_deps);
  // Differentiated periodicity and phase conditions.
  const Mat dft = (aug.monodromy - Mat::Identity(6, 6)) * sens.S0 +
                  model.rhs(aug.x_T, res.orbit.p) * sens.dT.transpose() + aug.sensitivity;
  EXPECT_LT(dft.norm(), 1e-8);
  const Vec dlt = sens.S0.transpose() * phase_residual_state_gradient(model, metric, res.orbit.p, res.orbit.x0) +
                  real.dp_deps.transpose() * phase_residual_param_gradient(model, metric, res.orbit.p, res.orbit.x0);
  EXPECT_LT(dlt.norm(), 1e-8);

  const Mat doubled = 2.0 * real.dp_deps;
  const auto aug2 = integrate_augmented(model, res.orbit.p, res.orbit.x0, res.orbit.period, doubled, {});
  const auto sens2 = solve_initial_sensitivity(model, metric, res.orbit.p, res.orbit.x0, aug2.x_T, aug2.monodromy,
                                               aug2.sensitivity, doubled);
  EXPECT_LT((sens2.S0 - 2.0 * sens.S0).norm(), 1e-9 * sens.S0.norm());
}

TEST(Sensitivity, IllConditionedBorderIsReported) {
  const TwoModeOscillator model;
  const CoordinateMetric metric(0, "q1");
  const Vec p = two_mode_parameters(testing::row_4a(), 1.0).values;
  const Mat h = Mat::Identity(6, 6);  // H_T - I = 0: every direction neutral
  EXPECT_THROW((void)solve_initial_sensitivity(model, metric, p, Vec::Unit(6, 5), Vec::Unit(6, 5), h,
                                               Mat::Zero(6, 1), Mat::Zero(p.size(), 1)),
               SensitivityError);
}

TEST(ExtremalResidual, ParallelGradientVanishes) {
  Vec eps(2), grad(2);
  eps << 0.06, 0.08;
  grad << 3.0, 4.0;
  EXPECT_LT(extremal_uncertainty_residual(grad, eps).norm(), 1e-15);
  grad << 4.0, -3.0;
  EXPECT_NEAR(extremal_uncertainty_residual(grad, eps).norm(), 5.0, 1e-14);
  EXPECT_EQ(extremal_uncertainty_residual(Vec::Zero(2), eps).norm(), 0.0);
}

TEST(ExtremalResidual, ZeroSetIsBasisIndependent) {
  std::mt19937 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Vec eps(4);
    for (int i = 0; i < 4; ++i) eps(i) = n(rng);
    const Vec grad_parallel = 1.7 * eps;
    // Two different pivots give two different orthonormal bases.
    for (Eigen::Index pivot = 0; pivot < 4; ++pivot)
      EXPECT_LT(extremal_uncertainty_residual(grad_parallel, eps, pivot).norm(), 1e-12);
    Vec grad(4);
    for (int i = 0; i < 4; ++i) grad(i) = n(rng);
    const double a = extremal_uncertainty_residual(grad, eps, 0).norm();
    const double b = extremal_uncertainty_residual(grad, eps, 3).norm();
    EXPECT_NEAR(a, b, 1e-12);
  }
}

TEST(ExtremalResidual, DegenerateAtOrigin) {
  EXPECT_THROW((void)extremal_uncertainty_residual(Vec::Ones(2), Vec::Zero(2)), DegenerateOriginError);
}

}  // namespace
}  // namespace uqcont
