#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "uqcont/continuation.hpp"
#include "uqcont/models.hpp"

namespace uqcont::testing {

// Example table rows, copied independently of the harness presets.
inline TwoModeParameters row_4a() { return {1, 1, 0.05, 0.005, 0.05, 1, 1, 1, 1, 0.5, 1, 0.03, 0.03}; }
inline TwoModeParameters row_4b() { return {1, 1, 0.08, 0.02, 0.05, 1, 0.2, 0.8, 1, 0.02, 2, 0.1, -0.03}; }
inline TwoModeParameters row_4c() { return {1, 1, 0.008, 0.001, 0.008, 1, 0.04, 1, 0.5, 0.01, 0.5, -0.005, 0.0052}; }
inline TwoModeParameters row_4d() { return {1, 0.05, 0.015, 0.015, 0, 1, 0.0454, 0, 1, 0.0042, 0, 0.2, 0}; }

inline ParameterSet duffing_reference(double omega) { return duffing_parameters(1.0, 0.1, 1.0, 1.0, 0.2, omega); }

/// dx/dt = a x, parameter a. Used to check variational and sensitivity
/// equations against closed forms.
class ScalarDecay final : public SystemModel {
 public:
  [[nodiscard]] std::string_view name() const noexcept override { return "scalar"; }
  [[nodiscard]] int dimension() const noexcept override { return 1; }
  [[nodiscard]] const std::vector<std::string>& parameter_names() const noexcept override { return names_; }
  using SystemModel::param_jacobian;
  using SystemModel::rhs;
  using SystemModel::state_jacobian;
  void rhs(ConstVecRef x, ConstVecRef p, VecRef out) const override { out(0) = p(0) * x(0); }
  void state_jacobian(ConstVecRef, ConstVecRef p, MatRef out) const override { out(0, 0) = p(0); }
  void param_jacobian(ConstVecRef x, ConstVecRef, MatRef out) const override { out(0, 0) = x(0); }

 private:
  std::vector<std::string> names_{"a"};
};

/// Stuart-Landau pair on its own: states (s1, s2), parameter omega.
class StuartLandau final : public SystemModel {
 public:
  [[nodiscard]] std::string_view name() const noexcept override { return "stuart_landau"; }
  [[nodiscard]] int dimension() const noexcept override { return 2; }
  [[nodiscard]] const std::vector<std::string>& parameter_names() const noexcept override { return names_; }
  using SystemModel::param_jacobian;
  using SystemModel::rhs;
  using SystemModel::state_jacobian;
  void rhs(ConstVecRef x, ConstVecRef p, VecRef out) const override {
    const double rr = x(0) * x(0) + x(1) * x(1);
    out(0) = x(0) + p(0) * x(1) - x(0) * rr;
    out(1) = -p(0) * x(0) + x(1) - x(1) * rr;
  }
  void state_jacobian(ConstVecRef x, ConstVecRef p, MatRef out) const override {
    const double a = x(0), b = x(1);
    out << 1 - 3 * a * a - b * b, p(0) - 2 * a * b, -p(0) - 2 * a * b, 1 - a * a - 3 * b * b;
  }
  void param_jacobian(ConstVecRef x, ConstVecRef, MatRef out) const override { out << x(1), -x(0); }

 private:
  std::vector<std::string> names_{"omega"};
};

inline UncertainSystem duffing_system(std::vector<std::string> uncertain = {"c", "F"}) {
  UncertainSystem sys;
  sys.model = std::make_shared<DuffingOscillator>();
  sys.metric = std::make_shared<CoordinateMetric>(0, "q");
  sys.reference = duffing_reference(0.3);
  for (auto& name : uncertain) sys.uncertainty.entries.push_back({std::move(name), UncertaintyKind::proportional});
  return sys;
}

inline UncertainSystem two_mode_system(const TwoModeParameters& row, int metric_state, std::vector<std::string> uncertain) {
  UncertainSystem sys;
  sys.model = std::make_shared<TwoModeOscillator>();
  sys.metric = std::make_shared<CoordinateMetric>(metric_state, metric_state == 0 ? "q1" : "q2");
  sys.reference = two_mode_parameters(row, 0.5);
  for (auto& name : uncertain) sys.uncertainty.entries.push_back({std::move(name), UncertaintyKind::proportional});
  return sys;
}

inline double relative_error(const Mat& a, const Mat& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

}  // namespace uqcont::testing
