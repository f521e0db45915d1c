#include <gtest/gtest.h>

#include <random>

#include "support.hpp"
#include "uqcont/models.hpp"

namespace uqcont {
namespace {

using testing::row_4a;
using testing::row_4b;

UncertaintyMap map_of(std::initializer_list<const char*> names) {
  UncertaintyMap map;
  for (const char* n : names) map.entries.push_back({n, UncertaintyKind::proportional});
  return map;
}

TEST(ApplyUncertainty, ZeroEpsIsIdentity) {
  const auto p0 = two_mode_parameters(row_4a(), 0.9);
  const auto real = apply_uncertainty(p0, map_of({"k1", "F1"}), Vec::Zero(2));
  EXPECT_EQ(real.p, p0.values);
}

TEST(ApplyUncertainty, ProportionalEntryAndDerivative) {
  const auto p0 = two_mode_parameters(testing::row_4d(), 1.0);
  Vec eps(2);
  eps << 0.1, 0.0;
  const auto real = apply_uncertainty(p0, map_of({"c1", "F1"}), eps);
  const auto ic1 = static_cast<Eigen::Index>(p0.index_of("c1"));
  EXPECT_NEAR(real.p(ic1), 0.0165, 1e-15);
  EXPECT_DOUBLE_EQ(real.dp_deps(ic1, 0), 0.015);
  EXPECT_EQ(real.dp_deps.col(0).cwiseAbs().sum(), 0.015);
}

TEST(ApplyUncertainty, DuffingDampingAndForcing) {
  const auto p0 = testing::duffing_reference(1.0);
  Vec eps(2);
  eps << 0.05, -0.05;
  const auto real = apply_uncertainty(p0, map_of({"c", "F"}), eps);
  EXPECT_NEAR(real.p(DuffingOscillator::c), 0.105, 1e-15);
  EXPECT_NEAR(real.p(DuffingOscillator::F), 0.19, 1e-15);
}

TEST(ApplyUncertainty, UnmappedEntriesUntouched) {
  const auto p0 = two_mode_parameters(row_4b(), 1.1);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int trial = 0; trial < 20; ++trial) {
    Vec eps(2);
    eps << u(rng), u(rng);
    const auto real = apply_uncertainty(p0, map_of({"c1", "F1"}), eps);
    for (Eigen::Index i = 0; i < real.p.size(); ++i) {
      if (i == TwoModeOscillator::c1 || i == TwoModeOscillator::F1) continue;
      EXPECT_EQ(real.p(i), p0.values(i));
    }
  }
}

TEST(UncertaintyMap, RejectsUnknownDuplicateAndLambda) {
  const auto p0 = two_mode_parameters(row_4a(), 1.0);
  EXPECT_THROW(map_of({"k9"}).validate(p0), ModelError);
  EXPECT_THROW(map_of({"k1", "k1"}).validate(p0), ModelError);
  EXPECT_THROW(map_of({"omega"}).validate(p0), ModelError);
  EXPECT_THROW(apply_uncertainty(p0, map_of({"nope"}), Vec::Zero(1)), ModelError);
}

TEST(Sphere, Residual) {
  EXPECT_EQ(sphere_residual(Vec::Zero(2), 0.0), 0.0);
  Vec a(2);
  a << 0.06, 0.08;
  EXPECT_NEAR(sphere_residual(a, 0.1), 0.0, 1e-17);
  Vec b(2);
  b << 0.1, 0.0;
  EXPECT_NEAR(sphere_residual(b, 0.07), 0.0051, 1e-15);
}

TEST(Sphere, TangentBasisExamples) {
  Vec a(2);
  a << 0.1, 0.0;
  Mat basis = sphere_tangent_basis(a);
  ASSERT_EQ(basis.rows(), 1);
  EXPECT_NEAR(std::abs(basis(0, 1)), 1.0, 1e-15);
  EXPECT_NEAR(basis(0, 0), 0.0, 1e-15);

  Vec b(2);
  b << 0.06, 0.08;
  basis = sphere_tangent_basis(b);
  const double sign = basis(0, 0) < 0 ? 1.0 : -1.0;
  EXPECT_NEAR(sign * basis(0, 0), -0.8, 1e-14);
  EXPECT_NEAR(sign * basis(0, 1), 0.6, 1e-14);

  Vec c = Vec::Zero(3);
  c(0) = 0.3;
  basis = sphere_tangent_basis(c);
  EXPECT_LT((basis * c).norm(), 1e-15);
  EXPECT_LT((basis * basis.transpose() - Mat::Identity(2, 2)).norm(), 1e-14);
  EXPECT_NEAR(basis.col(0).norm(), 0.0, 1e-15);
}

TEST(Sphere, TangentBasisOrthonormalForRandomEps) {
  std::mt19937 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int m = 1; m <= 8; ++m) {
    for (int trial = 0; trial < 25; ++trial) {
      Vec eps(m);
      for (int i = 0; i < m; ++i) eps(i) = n(rng);
      const Mat basis = sphere_tangent_basis(eps);
      ASSERT_EQ(basis.rows(), m - 1);
      EXPECT_LT((basis * eps).norm(), 1e-12 * eps.norm());
      EXPECT_LT((basis * basis.transpose() - Mat::Identity(m - 1, m - 1)).norm(), 1e-12);
    }
  }
}

TEST(Sphere, TangentBasisDeterministicAndDegenerateAtOrigin) {
  Vec eps(3);
  eps << 0.2, -0.5, 0.1;
  EXPECT_EQ(sphere_tangent_basis(eps), sphere_tangent_basis(eps));
  EXPECT_EQ(tangent_basis_pivot(eps), 1);
  EXPECT_THROW((void)sphere_tangent_basis(Vec::Zero(3)), DegenerateOriginError);
}

TEST(TwoMode, StuartLandauOnLimitCycle) {
  const TwoModeOscillator model;
  const auto p = two_mode_parameters(row_4a(), 1.3).values;
  Vec x = Vec::Zero(6);
  x(5) = 1.0;
  const Vec f = model.rhs(x, p);
  EXPECT_NEAR(f(4), 1.3, 1e-15);
  EXPECT_NEAR(f(5), 0.0, 1e-15);
}

TEST(TwoMode, LinearStructureWithoutCubicAndForcing) {
  const TwoModeOscillator model;
  auto row = row_4a();
  row.alpha1 = row.alpha2 = row.alpha3 = 0.0;
  row.F1 = row.F2 = 0.0;
  const auto p = two_mode_parameters(row, 1.0).values;
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  Vec x1(6), x2(6);
  for (int i = 0; i < 4; ++i) {
    x1(i) = u(rng);
    x2(i) = u(rng);
  }
  x1.tail(2).setZero();
  x2.tail(2).setZero();
  const Mat a1 = model.state_jacobian(x1, p);
  const Mat a2 = model.state_jacobian(x2, p);
  EXPECT_LT((a1 - a2).topLeftCorner(4, 4).norm(), 1e-15);
  const Vec lin = model.rhs(Vec(x1 + 2.0 * x2), p) - model.rhs(x1, p) - 2.0 * model.rhs(x2, p);
  EXPECT_LT(lin.head(4).norm(), 1e-14);
}

TEST(TwoMode, RejectsNonpositiveMass) {
  auto row = row_4a();
  row.m2 = 0.0;
  EXPECT_THROW((void)two_mode_parameters(row, 1.0), ModelError);
}

TEST(TwoMode, JacobiansMatchFiniteDifferences) {
  const TwoModeOscillator model;
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::uniform_real_distribution<double> pos(0.3, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    Vec x(6), p(TwoModeOscillator::count);
    for (int i = 0; i < 6; ++i) x(i) = u(rng);
    for (int i = 0; i < p.size(); ++i) p(i) = u(rng);
    p(TwoModeOscillator::m1) = pos(rng);
    p(TwoModeOscillator::m2) = pos(rng);
    const auto check = check_jacobians(model, x, p);
    EXPECT_LT(check.state_error, 1e-5);
    EXPECT_LT(check.param_error, 1e-5);
  }
}

TEST(Duffing, JacobiansMatchFiniteDifferences) {
  const DuffingOscillator model;
  std::mt19937 rng(43);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int trial = 0; trial < 100; ++trial) {
    Vec x(4), p(DuffingOscillator::count);
    for (int i = 0; i < 4; ++i) x(i) = u(rng);
    for (int i = 0; i < p.size(); ++i) p(i) = u(rng);
    p(DuffingOscillator::m) = 0.5 + std::abs(p(DuffingOscillator::m));
    const auto check = check_jacobians(model, x, p);
    EXPECT_LT(check.state_error, 1e-5);
    EXPECT_LT(check.param_error, 1e-5);
  }
}

TEST(Metric, CoordinateGradients) {
  const CoordinateMetric metric(2, "q2");
  Vec x(6);
  x << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6;
  const Vec p = Vec::Ones(3);
  EXPECT_EQ(metric.value(x, p), 0.3);
  EXPECT_EQ(metric.state_gradient(x, p), Vec::Unit(6, 2));
  EXPECT_EQ(metric.param_gradient(x, p).norm(), 0.0);
  EXPECT_EQ(metric.state_hessian(x, p).norm(), 0.0);
  const auto check = check_metric_gradients(metric, x, p);
  EXPECT_LT(check.state_error, 1e-9);
}

TEST(NaturalFrequencies, WellSeparatedRow) {
  const auto [w1, w2] = linear_natural_frequencies(two_mode_parameters(row_4a(), 1.0));
  EXPECT_NEAR(w1, 1.0, 1e-9);
  EXPECT_NEAR(w2, std::sqrt(3.0), 1e-9);
}

TEST(NaturalFrequencies, CommensurateRowMatchesEigensolve) {
  const auto [w1, w2] = linear_natural_frequencies(two_mode_parameters(row_4b(), 1.0));
  // [[1.2, -0.2], [-0.2, 1.0]]: lambda = 1.1 -+ sqrt(0.01 + 0.04)
  EXPECT_NEAR(w1, std::sqrt(1.1 - std::sqrt(0.05)), 1e-12);
  EXPECT_NEAR(w2, std::sqrt(1.1 + std::sqrt(0.05)), 1e-12);
  EXPECT_NEAR(w1, 0.936, 5e-4);
  EXPECT_NEAR(w2, 1.150, 5e-4);
}

TEST(NaturalFrequencies, UncoupledDegenerate) {
  auto row = row_4a();
  row.k2 = 0.0;
  const auto [w1, w2] = linear_natural_frequencies(two_mode_parameters(row, 1.0));
  EXPECT_NEAR(w1, 1.0, 1e-12);
  EXPECT_NEAR(w2, 1.0, 1e-12);
}

TEST(NaturalFrequencies, RejectsIndefiniteStiffness) {
  auto row = row_4a();
  row.k1 = -3.0;
  EXPECT_THROW((void)linear_natural_frequencies(two_mode_parameters(row, 1.0)), ModelError);
}

}  // namespace
}  // namespace uqcont
