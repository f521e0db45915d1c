#pragma once

// Initial-state parametric sensitivities of a periodic orbit and the
// extremal-in-uncertainty residual built from them.

#include <stdexcept>

#include "uqcont/integrate.hpp"
#include "uqcont/models.hpp"
#include "uqcont/orbits.hpp"

namespace uqcont {

/// Raised when the bordered sensitivity matrix is singular or its condition
/// estimate exceeds the threshold (the orbit is close to a bifurcation).
class SensitivityError : public std::runtime_error {
 public:
  SensitivityError(const std::string& what, double condition)
      : std::runtime_error(what), condition_(condition) {}
  [[nodiscard]] double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

struct SensitivitySolution {
  Mat S0;          ///< N x K, dx0/dtheta
  Vec dT;          ///< length K, dT/dtheta
  double condition_estimate = 0.0;
  int orientation = 0;  ///< sign of det of the bordered matrix; flips at each fold of a response curve
};

inline constexpr double kDefaultConditionLimit = 1e12;

/// Solves [[H_T - I, F(x(T))], [dL_t/dx0, 0]] [S0; dT] = [-S_T; -dL_t/dp D]
/// for every column of D = `directions` (P x K). `S_T` is the end-of-period
/// sensitivity from integrate_augmented with the same directions.
[[nodiscard]] SensitivitySolution solve_initial_sensitivity(const SystemModel& model, const Metric& metric,
                                                            ConstVecRef p, ConstVecRef x0, ConstVecRef x_T,
                                                            const Mat& monodromy, const Mat& S_T,
                                                            const Mat& directions,
                                                            double condition_limit = kDefaultConditionLimit);

/// Convenience overload: one augmented integration over the orbit.
[[nodiscard]] SensitivitySolution solve_initial_sensitivity(const PeriodicOrbit& orbit, const SystemModel& model,
                                                            const Metric& metric, const Mat& directions,
                                                            const IntegrationSettings& settings,
                                                            double condition_limit = kDefaultConditionLimit);

/// grad_eps g = grad_x g . S0 + grad_p g . dp/deps
[[nodiscard]] Vec metric_uncertainty_gradient(const Metric& metric, ConstVecRef x0, ConstVecRef p, const Mat& S0,
                                              const Mat& dp_deps);

/// sphere_tangent_basis(eps) . grad_eps g, length M - 1. Throws
/// DegenerateOriginError at eps = 0.
[[nodiscard]] Vec extremal_uncertainty_residual(const Vec& grad_eps, const Vec& eps);
[[nodiscard]] Vec extremal_uncertainty_residual(const Vec& grad_eps, const Vec& eps, Eigen::Index pivot);

}  // namespace uqcont
