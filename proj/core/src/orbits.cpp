#include "uqcont/orbits.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace uqcont {

std::string_view to_string(SolveStatus status) noexcept {
  switch (status) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::no_convergence: return "no-convergence";
    case SolveStatus::singular: return "singular";
  }
  return "unknown";
}

Vec periodicity_residual(const SystemModel& model, ConstVecRef p, ConstVecRef x0, double T,
                         const IntegrationSettings& settings) {
  return integrate_state(model, p, x0, T, settings).x_T - x0;
}

double phase_residual(const SystemModel& model, const Metric& metric, ConstVecRef p, ConstVecRef x0) {
  return metric.state_gradient(x0, p).dot(model.rhs(x0, p));
}

Vec phase_residual_state_gradient(const SystemModel& model, const Metric& metric, ConstVecRef p, ConstVecRef x0) {
  const Vec grad = metric.state_gradient(x0, p);
  Vec out = model.state_jacobian(x0, p).transpose() * grad;
  out.noalias() += metric.state_hessian(x0, p) * model.rhs(x0, p);
  return out;
}

Vec phase_residual_param_gradient(const SystemModel& model, const Metric& metric, ConstVecRef p, ConstVecRef x0) {
  return model.param_jacobian(x0, p).transpose() * metric.state_gradient(x0, p);
}

namespace {

struct ShootingEval {
  Vec residual;
  AugmentedResult aug;
};

ShootingEval shoot(const SystemModel& model, const Metric& metric, const Vec& p, const Vec& x0, double T,
                   const IntegrationSettings& settings) {
  const Mat none(model.num_parameters(), 0);
  ShootingEval e{Vec(model.dimension() + 1), integrate_augmented(model, p, x0, T, none, settings)};
  e.residual.head(model.dimension()) = e.aug.x_T - x0;
  e.residual(model.dimension()) = phase_residual(model, metric, p, x0);
  return e;
}

PeriodicOrbit make_orbit(const Metric& metric, const Vec& p, const Vec& x0, double T, const ShootingEval& e) {
  return PeriodicOrbit{x0, T, p, e.aug.monodromy, e.residual.norm(), metric.value(x0, p)};
}

}  // namespace

OrbitSolveResult solve_periodic_orbit(const SystemModel& model, const Metric& metric, ConstVecRef p_in,
                                      ConstVecRef guess_x0, double guess_T, const IntegrationSettings& settings,
                                      const NewtonSettings& newton) {
  const int n = model.dimension();
  const Vec p = p_in;
  Vec x0 = guess_x0;
  double T = guess_T;
  OrbitSolveResult result;

  ShootingEval current;
  try {
    current = shoot(model, metric, p, x0, T, settings);
  } catch (const IntegrationError& err) {
    result.orbit = PeriodicOrbit{x0, T, p, Mat::Identity(n, n), std::numeric_limits<double>::infinity(), 0.0};
    result.message = err.what();
    return result;
  }
  double norm = current.residual.norm();

  for (int it = 0; it <= newton.max_iterations; ++it) {
    result.iterations = it;
    if (norm < newton.tolerance) {
      result.status = SolveStatus::converged;
      result.orbit = make_orbit(metric, p, x0, T, current);
      return result;
    }
    if (it == newton.max_iterations) break;

    Mat jac = Mat::Zero(n + 1, n + 1);
    jac.topLeftCorner(n, n) = current.aug.monodromy - Mat::Identity(n, n);
    jac.topRightCorner(n, 1) = model.rhs(current.aug.x_T, p);
    jac.bottomLeftCorner(1, n) = phase_residual_state_gradient(model, metric, p, x0).transpose();
    const Eigen::PartialPivLU<Mat> lu(jac);
    if (!(lu.rcond() > newton.singular_rcond)) {
      result.status = SolveStatus::singular;
      result.orbit = make_orbit(metric, p, x0, T, current);
      result.message = "singular shooting Jacobian (near a bifurcation of the periodic orbit)";
      return result;
    }
    const Vec delta = -lu.solve(current.residual);

    double step = 1.0;
    bool improved = false;
    for (int halving = 0; halving <= newton.max_halvings; ++halving, step *= 0.5) {
      const Vec x_try = x0 + step * delta.head(n);
      const double T_try = T + step * delta(n);
      if (!(T_try > 0.0)) continue;
      try {
        ShootingEval trial = shoot(model, metric, p, x_try, T_try, settings);
        const double trial_norm = trial.residual.norm();
        if (trial_norm < norm || halving == newton.max_halvings) {
          x0 = x_try;
          T = T_try;
          current = std::move(trial);
          improved = trial_norm < norm;
          norm = trial_norm;
          break;
        }
      } catch (const IntegrationError&) {
        // try a shorter step
      }
    }
    if (!improved && norm >= newton.tolerance && step < 1.0 / (1 << newton.max_halvings)) break;
  }

  result.status = SolveStatus::no_convergence;
  result.orbit = make_orbit(metric, p, x0, T, current);
  std::ostringstream msg;
  msg << "Newton did not converge: residual " << norm << " after " << result.iterations << " iterations";
  result.message = msg.str();
  return result;
}

Vec harmonic_guess(const HarmonicResponse& response, const Metric& metric, ConstVecRef p) {
  const auto n = static_cast<Eigen::Index>(response.amplitudes.size());
  constexpr int kSamples = 720;
  Vec best(n), x(n);
  double best_value = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < kSamples; ++s) {
    const double phase = 2.0 * std::numbers::pi * s / kSamples;
    const std::complex<double> rot(std::cos(phase), std::sin(phase));
    for (Eigen::Index i = 0; i < n; ++i) x(i) = (response.amplitudes[static_cast<std::size_t>(i)] * rot).real();
    const double g = metric.value(x, p);
    if (g > best_value) {
      best_value = g;
      best = x;
    }
  }
  return best;
}

Vec time_marching_guess(const SystemModel& model, const Metric& metric, ConstVecRef p, double omega, int periods,
                        const IntegrationSettings& settings) {
  const int n = model.dimension();
  Vec x = Vec::Zero(n);
  x(n - 1) = 1.0;
  const double period = 2.0 * std::numbers::pi / omega;
  if (periods > 1) x = integrate_state(model, p, x, period * (periods - 1), settings).x_T;
  IntegrationSettings dense = settings;
  dense.dense_output = true;
  const auto last = integrate_state(model, p, x, period, dense);
  Vec best = last.trajectory.states.front();
  double best_value = metric.value(best, p);
  for (const auto& s : last.trajectory.states) {
    const double g = metric.value(s, p);
    if (g > best_value) {
      best_value = g;
      best = s;
    }
  }
  return best;
}

OrbitSolveResult solve_forced_orbit(const SystemModel& model, const Metric& metric, ConstVecRef p, double omega,
                                    const IntegrationSettings& settings, const NewtonSettings& newton) {
  const double period = 2.0 * std::numbers::pi / omega;
  if (auto lin = model.linear_response(p)) {
    auto result = solve_periodic_orbit(model, metric, p, harmonic_guess(*lin, metric, p), period, settings, newton);
    if (result.converged()) return result;
  }
  return solve_periodic_orbit(model, metric, p, time_marching_guess(model, metric, p, omega, 200, settings), period,
                              settings, newton);
}

}  // namespace uqcont
