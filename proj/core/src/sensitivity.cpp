#include "uqcont/sensitivity.hpp"

#include <limits>
#include <sstream>

namespace uqcont {

SensitivitySolution solve_initial_sensitivity(const SystemModel& model, const Metric& metric, ConstVecRef p,
                                              ConstVecRef x0, ConstVecRef x_T, const Mat& monodromy, const Mat& S_T,
                                              const Mat& directions, double condition_limit) {
  const int n = model.dimension();
  const auto k = directions.cols();
  if (monodromy.rows() != n || monodromy.cols() != n || S_T.rows() != n || S_T.cols() != k ||
      directions.rows() != model.num_parameters()) {
    throw ModelError("solve_initial_sensitivity: dimension mismatch");
  }

  Mat border = Mat::Zero(n + 1, n + 1);
  border.topLeftCorner(n, n) = monodromy - Mat::Identity(n, n);
  border.topRightCorner(n, 1) = model.rhs(x_T, p);
  border.bottomLeftCorner(1, n) = phase_residual_state_gradient(model, metric, p, x0).transpose();

  Mat rhs(n + 1, k);
  rhs.topRows(n) = -S_T;
  rhs.bottomRows(1) = -(phase_residual_param_gradient(model, metric, p, x0).transpose() * directions);

  const Eigen::PartialPivLU<Mat> lu(border);
  const double rcond = lu.rcond();
  const double condition = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
  if (!(condition <= condition_limit)) {
    std::ostringstream msg;
    msg << "near-bifurcation sensitivity failure: condition estimate " << condition;
    throw SensitivityError(msg.str(), condition);
  }

  const Mat sol = lu.solve(rhs);
  const int orientation = lu.determinant() < 0.0 ? -1 : 1;
  return SensitivitySolution{sol.topRows(n), sol.row(n).transpose(), condition, orientation};
}

SensitivitySolution solve_initial_sensitivity(const PeriodicOrbit& orbit, const SystemModel& model,
                                              const Metric& metric, const Mat& directions,
                                              const IntegrationSettings& settings, double condition_limit) {
  const auto aug = integrate_augmented(model, orbit.p, orbit.x0, orbit.period, directions, settings);
  return solve_initial_sensitivity(model, metric, orbit.p, orbit.x0, aug.x_T, aug.monodromy, aug.sensitivity,
                                   directions, condition_limit);
}

Vec metric_uncertainty_gradient(const Metric& metric, ConstVecRef x0, ConstVecRef p, const Mat& S0,
                                const Mat& dp_deps) {
  Vec grad = S0.transpose() * metric.state_gradient(x0, p);
  grad.noalias() += dp_deps.transpose() * metric.param_gradient(x0, p);
  return grad;
}

Vec extremal_uncertainty_residual(const Vec& grad_eps, const Vec& eps) {
  return sphere_tangent_basis(eps) * grad_eps;
}

Vec extremal_uncertainty_residual(const Vec& grad_eps, const Vec& eps, Eigen::Index pivot) {
  return sphere_tangent_basis(eps, pivot) * grad_eps;
}

}  // namespace uqcont
