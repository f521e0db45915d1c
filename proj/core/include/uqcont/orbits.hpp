#pragma once

// Single-shooting periodic orbits with the metric-extremum phase condition.

#include <optional>
#include <string>
#include <string_view>

#include "uqcont/integrate.hpp"
#include "uqcont/models.hpp"

namespace uqcont {

struct NewtonSettings {
  double tolerance = 1e-10;
  int max_iterations = 20;
  int max_halvings = 4;
  double singular_rcond = 1e-14;
};

/// Converged shooting solution.
struct PeriodicOrbit {
  Vec x0;
  double period = 0.0;
  Vec p;
  Mat monodromy;
  double residual_norm = 0.0;
  double metric_value = 0.0;
};

enum class SolveStatus { converged, no_convergence, singular };
[[nodiscard]] std::string_view to_string(SolveStatus status) noexcept;

struct OrbitSolveResult {
  PeriodicOrbit orbit;  ///< best iterate when not converged
  SolveStatus status = SolveStatus::no_convergence;
  int iterations = 0;
  std::string message;

  [[nodiscard]] bool converged() const noexcept { return status == SolveStatus::converged; }
};

/// x(T, p; x0) - x0
[[nodiscard]] Vec periodicity_residual(const SystemModel& model, ConstVecRef p, ConstVecRef x0, double T,
                                       const IntegrationSettings& settings);

/// dg/dt at t = 0, i.e. grad_x g(x0, p) . F(x0, p).
[[nodiscard]] double phase_residual(const SystemModel& model, const Metric& metric, ConstVecRef p, ConstVecRef x0);

/// d(L_t)/dx0 = grad_x g . A + F^T hess_x g.
[[nodiscard]] Vec phase_residual_state_gradient(const SystemModel& model, const Metric& metric, ConstVecRef p,
                                                ConstVecRef x0);

/// d(L_t)/dp = grad_x g . dF/dp (length P).
[[nodiscard]] Vec phase_residual_param_gradient(const SystemModel& model, const Metric& metric, ConstVecRef p,
                                                ConstVecRef x0);

/// Damped Newton on (x0, T) against [periodicity; phase]. The Jacobian is
/// [[H_T - I, F(x(T))], [dL_t/dx0, 0]] from one augmented integration.
[[nodiscard]] OrbitSolveResult solve_periodic_orbit(const SystemModel& model, const Metric& metric, ConstVecRef p,
                                                    ConstVecRef guess_x0, double guess_T,
                                                    const IntegrationSettings& settings,
                                                    const NewtonSettings& newton = {});

/// State of a harmonic response at the instant the metric peaks.
[[nodiscard]] Vec harmonic_guess(const HarmonicResponse& response, const Metric& metric, ConstVecRef p);

/// Steady state after `periods` forcing periods from rest with the forcing
/// pair at (0, 1), sampled where the metric peaks in the final period.
[[nodiscard]] Vec time_marching_guess(const SystemModel& model, const Metric& metric, ConstVecRef p, double omega,
                                      int periods, const IntegrationSettings& settings);

/// Solves for the forced orbit at p starting from the linear response (or
/// time marching when the model has no linearisation).
[[nodiscard]] OrbitSolveResult solve_forced_orbit(const SystemModel& model, const Metric& metric, ConstVecRef p,
                                                  double omega, const IntegrationSettings& settings,
                                                  const NewtonSettings& newton = {});

}  // namespace uqcont
