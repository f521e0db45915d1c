#include "uqcont/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace uqcont {

// -----------------------------------------------------------------------------
// ParameterSet / UncertaintyMap
// -----------------------------------------------------------------------------

std::optional<std::size_t> ParameterSet::find(std::string_view name) const noexcept {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names.begin());
}

std::size_t ParameterSet::index_of(std::string_view name) const {
  if (auto idx = find(name)) return *idx;
  throw ModelError("unknown parameter '" + std::string(name) + "'");
}

ParameterSet ParameterSet::with_lambda(double lambda) const {
  ParameterSet out = *this;
  out.values(static_cast<Eigen::Index>(lambda_index)) = lambda;
  return out;
}

ParameterSet ParameterSet::with(std::string_view name, double value) const {
  ParameterSet out = *this;
  out.values(static_cast<Eigen::Index>(index_of(name))) = value;
  return out;
}

void ParameterSet::validate() const {
  if (names.empty()) throw ModelError("parameter set is empty");
  if (static_cast<std::size_t>(values.size()) != names.size())
    throw ModelError("parameter names and values differ in length");
  if (lambda_index >= names.size()) throw ModelError("bifurcation parameter index out of range");
  if (!values.allFinite()) throw ModelError("parameter values must be finite");
}

void UncertaintyMap::validate(const ParameterSet& reference) const {
  if (entries.empty()) throw ModelError("uncertainty map must contain at least one parameter");
  std::vector<std::size_t> seen;
  for (const auto& e : entries) {
    const std::size_t idx = reference.index_of(e.name);
    if (idx == reference.lambda_index)
      throw ModelError("bifurcation parameter '" + e.name + "' cannot be uncertain");
    if (std::find(seen.begin(), seen.end(), idx) != seen.end())
      throw ModelError("parameter '" + e.name + "' appears twice in the uncertainty map");
    seen.push_back(idx);
  }
}

RealizedParameters apply_uncertainty(const ParameterSet& reference, const UncertaintyMap& map, const Vec& eps) {
  if (static_cast<std::size_t>(eps.size()) != map.size())
    throw ModelError("uncertainty vector length does not match the uncertainty map");
  RealizedParameters out{reference.values, Mat::Zero(reference.values.size(), eps.size())};
  for (std::size_t m = 0; m < map.size(); ++m) {
    const auto k = static_cast<Eigen::Index>(reference.index_of(map.entries[m].name));
    const auto col = static_cast<Eigen::Index>(m);
    switch (map.entries[m].kind) {
      case UncertaintyKind::proportional:
        out.p(k) = reference.values(k) * (1.0 + eps(col));
        out.dp_deps(k, col) = reference.values(k);
        break;
    }
  }
  return out;
}

// -----------------------------------------------------------------------------
// Sphere geometry
// -----------------------------------------------------------------------------

double sphere_residual(const Vec& eps, double r) noexcept { return eps.squaredNorm() - r * r; }

Eigen::Index tangent_basis_pivot(const Vec& eps) {
  Eigen::Index pivot = 0;
  eps.cwiseAbs().maxCoeff(&pivot);
  return pivot;
}

Mat sphere_tangent_basis(const Vec& eps) { return sphere_tangent_basis(eps, tangent_basis_pivot(eps)); }

Mat sphere_tangent_basis(const Vec& eps, Eigen::Index pivot) {
  const Eigen::Index m = eps.size();
  if (pivot < 0 || pivot >= m) throw std::out_of_range("tangent basis pivot out of range");
  const double norm = eps.norm();
  if (!(norm > 0.0)) throw DegenerateOriginError("sphere tangent basis is undefined at eps = 0");

  // H = I - 2 u u^T / (u^T u) with u = v - s e_k maps v onto s e_k, hence
  // H e_k = s v and the remaining columns of H span the complement of v.
  Vec u = eps / norm;
  const double s = u(pivot) >= 0.0 ? -1.0 : 1.0;
  u(pivot) -= s;
  const double uu = u.squaredNorm();

  Mat basis(m - 1, m);
  Eigen::Index row = 0;
  for (Eigen::Index j = 0; j < m; ++j) {
    if (j == pivot) continue;
    Vec col = -2.0 * u(j) / uu * u;
    col(j) += 1.0;
    basis.row(row++) = col.transpose();
  }
  return basis;
}

// -----------------------------------------------------------------------------
// SystemModel / Metric helpers
// -----------------------------------------------------------------------------

void SystemModel::validate_parameters(ConstVecRef p) const {
  if (p.size() != num_parameters()) throw ModelError("parameter vector has the wrong length");
  if (!p.allFinite()) throw ModelError("parameter vector contains non-finite entries");
}

std::optional<HarmonicResponse> SystemModel::linear_response(ConstVecRef) const { return std::nullopt; }

Vec SystemModel::rhs(ConstVecRef x, ConstVecRef p) const {
  Vec out(dimension());
  rhs(x, p, out);
  return out;
}

Mat SystemModel::state_jacobian(ConstVecRef x, ConstVecRef p) const {
  Mat out(dimension(), dimension());
  state_jacobian(x, p, out);
  return out;
}

Mat SystemModel::param_jacobian(ConstVecRef x, ConstVecRef p) const {
  Mat out(dimension(), num_parameters());
  param_jacobian(x, p, out);
  return out;
}

Vec Metric::state_gradient(ConstVecRef x, ConstVecRef p) const {
  Vec out(x.size());
  state_gradient(x, p, out);
  return out;
}

Vec Metric::param_gradient(ConstVecRef x, ConstVecRef p) const {
  Vec out(p.size());
  param_gradient(x, p, out);
  return out;
}

Mat Metric::state_hessian(ConstVecRef x, ConstVecRef p) const {
  Mat out(x.size(), x.size());
  state_hessian(x, p, out);
  return out;
}

double CoordinateMetric::value(ConstVecRef x, ConstVecRef) const { return x(index_); }

void CoordinateMetric::state_gradient(ConstVecRef, ConstVecRef, VecRef out) const {
  out.setZero();
  out(index_) = 1.0;
}

void CoordinateMetric::param_gradient(ConstVecRef, ConstVecRef, VecRef out) const { out.setZero(); }

void CoordinateMetric::state_hessian(ConstVecRef, ConstVecRef, MatRef out) const { out.setZero(); }

RealizedParameters UncertainSystem::realize(double lambda, const Vec& eps) const {
  return apply_uncertainty(reference.with_lambda(lambda), uncertainty, eps);
}

Vec UncertainSystem::lambda_direction() const {
  Vec e = Vec::Zero(num_parameters());
  e(static_cast<Eigen::Index>(reference.lambda_index)) = 1.0;
  return e;
}

void UncertainSystem::validate() const {
  if (!model) throw ModelError("system has no model");
  if (!metric) throw ModelError("system has no metric");
  reference.validate();
  if (reference.names != model->parameter_names())
    throw ModelError("reference parameters do not follow the model's canonical ordering");
  uncertainty.validate(reference);
  model->validate_parameters(reference.values);
}

// -----------------------------------------------------------------------------
// Two-mode oscillator
// -----------------------------------------------------------------------------

TwoModeOscillator::TwoModeOscillator()
    : names_{"m1", "m2", "c1", "c2", "c3", "k1", "k2", "k3", "alpha1", "alpha2", "alpha3", "F1", "F2", "omega"} {}

void TwoModeOscillator::rhs(ConstVecRef x, ConstVecRef p, VecRef out) const {
  const double d = x(0) - x(2);
  const double d3 = d * d * d;
  const double rho2 = x(4) * x(4) + x(5) * x(5);
  out(0) = x(1);
  out(1) = (-(p(k1) + p(k2)) * x(0) + p(k2) * x(2) - (p(c1) + p(c2)) * x(1) + p(c2) * x(3) -
            p(alpha1) * x(0) * x(0) * x(0) - p(alpha2) * d3 + p(F1) * x(5)) /
           p(m1);
  out(2) = x(3);
  out(3) = (-(p(k2) + p(k3)) * x(2) + p(k2) * x(0) - (p(c2) + p(c3)) * x(3) + p(c2) * x(1) -
            p(alpha3) * x(2) * x(2) * x(2) + p(alpha2) * d3 + p(F2) * x(5)) /
           p(m2);
  out(4) = x(4) + p(omega) * x(5) - x(4) * rho2;
  out(5) = -p(omega) * x(4) + x(5) - x(5) * rho2;
}

void TwoModeOscillator::state_jacobian(ConstVecRef x, ConstVecRef p, MatRef out) const {
  const double d = x(0) - x(2);
  const double cub = 3.0 * p(alpha2) * d * d;
  out.setZero();
  out(0, 1) = 1.0;
  out(1, 0) = (-(p(k1) + p(k2)) - 3.0 * p(alpha1) * x(0) * x(0) - cub) / p(m1);
  out(1, 1) = -(p(c1) + p(c2)) / p(m1);
  out(1, 2) = (p(k2) + cub) / p(m1);
  out(1, 3) = p(c2) / p(m1);
  out(1, 5) = p(F1) / p(m1);
  out(2, 3) = 1.0;
  out(3, 0) = (p(k2) + cub) / p(m2);
  out(3, 1) = p(c2) / p(m2);
  out(3, 2) = (-(p(k2) + p(k3)) - 3.0 * p(alpha3) * x(2) * x(2) - cub) / p(m2);
  out(3, 3) = -(p(c2) + p(c3)) / p(m2);
  out(3, 5) = p(F2) / p(m2);
  out(4, 4) = 1.0 - 3.0 * x(4) * x(4) - x(5) * x(5);
  out(4, 5) = p(omega) - 2.0 * x(4) * x(5);
  out(5, 4) = -p(omega) - 2.0 * x(4) * x(5);
  out(5, 5) = 1.0 - x(4) * x(4) - 3.0 * x(5) * x(5);
}

void TwoModeOscillator::param_jacobian(ConstVecRef x, ConstVecRef p, MatRef out) const {
  const double d = x(0) - x(2);
  const double d3 = d * d * d;
  const double b1 = -(p(k1) + p(k2)) * x(0) + p(k2) * x(2) - (p(c1) + p(c2)) * x(1) + p(c2) * x(3) -
                    p(alpha1) * x(0) * x(0) * x(0) - p(alpha2) * d3 + p(F1) * x(5);
  const double b2 = -(p(k2) + p(k3)) * x(2) + p(k2) * x(0) - (p(c2) + p(c3)) * x(3) + p(c2) * x(1) -
                    p(alpha3) * x(2) * x(2) * x(2) + p(alpha2) * d3 + p(F2) * x(5);
  out.setZero();
  out(1, m1) = -b1 / (p(m1) * p(m1));
  out(1, c1) = -x(1) / p(m1);
  out(1, c2) = (x(3) - x(1)) / p(m1);
  out(1, k1) = -x(0) / p(m1);
  out(1, k2) = (x(2) - x(0)) / p(m1);
  out(1, alpha1) = -x(0) * x(0) * x(0) / p(m1);
  out(1, alpha2) = -d3 / p(m1);
  out(1, F1) = x(5) / p(m1);
  out(3, m2) = -b2 / (p(m2) * p(m2));
  out(3, c2) = (x(1) - x(3)) / p(m2);
  out(3, c3) = -x(3) / p(m2);
  out(3, k2) = (x(0) - x(2)) / p(m2);
  out(3, k3) = -x(2) / p(m2);
  out(3, alpha2) = d3 / p(m2);
  out(3, alpha3) = -x(2) * x(2) * x(2) / p(m2);
  out(3, F2) = x(5) / p(m2);
  out(4, omega) = x(5);
  out(5, omega) = -x(4);
}

void TwoModeOscillator::validate_parameters(ConstVecRef p) const {
  SystemModel::validate_parameters(p);
  if (!(p(m1) > 0.0) || !(p(m2) > 0.0)) throw ModelError("two-mode masses must be positive");
}

std::optional<HarmonicResponse> TwoModeOscillator::linear_response(ConstVecRef p) const {
  using C = std::complex<double>;
  const double w = p(omega);
  Eigen::Matrix2cd dyn;
  dyn(0, 0) = C(p(k1) + p(k2) - w * w * p(m1), w * (p(c1) + p(c2)));
  dyn(0, 1) = C(-p(k2), -w * p(c2));
  dyn(1, 0) = C(-p(k2), -w * p(c2));
  dyn(1, 1) = C(p(k2) + p(k3) - w * w * p(m2), w * (p(c2) + p(c3)));
  const Eigen::Vector2cd q = dyn.partialPivLu().solve(Eigen::Vector2cd(p(F1), p(F2)));
  const C iw(0.0, w);
  return HarmonicResponse{{q(0), iw * q(0), q(1), iw * q(1), C(0.0, -1.0), C(1.0, 0.0)}, w};
}

// -----------------------------------------------------------------------------
// Duffing oscillator
// -----------------------------------------------------------------------------

DuffingOscillator::DuffingOscillator() : names_{"m", "c", "k", "alpha", "F", "omega"} {}

void DuffingOscillator::rhs(ConstVecRef x, ConstVecRef p, VecRef out) const {
  const double rho2 = x(2) * x(2) + x(3) * x(3);
  out(0) = x(1);
  out(1) = (-p(c) * x(1) - p(k) * x(0) - p(alpha) * x(0) * x(0) * x(0) + p(F) * x(3)) / p(m);
  out(2) = x(2) + p(omega) * x(3) - x(2) * rho2;
  out(3) = -p(omega) * x(2) + x(3) - x(3) * rho2;
}

void DuffingOscillator::state_jacobian(ConstVecRef x, ConstVecRef p, MatRef out) const {
  out.setZero();
  out(0, 1) = 1.0;
  out(1, 0) = (-p(k) - 3.0 * p(alpha) * x(0) * x(0)) / p(m);
  out(1, 1) = -p(c) / p(m);
  out(1, 3) = p(F) / p(m);
  out(2, 2) = 1.0 - 3.0 * x(2) * x(2) - x(3) * x(3);
  out(2, 3) = p(omega) - 2.0 * x(2) * x(3);
  out(3, 2) = -p(omega) - 2.0 * x(2) * x(3);
  out(3, 3) = 1.0 - x(2) * x(2) - 3.0 * x(3) * x(3);
}

void DuffingOscillator::param_jacobian(ConstVecRef x, ConstVecRef p, MatRef out) const {
  const double accel_force = -p(c) * x(1) - p(k) * x(0) - p(alpha) * x(0) * x(0) * x(0) + p(F) * x(3);
  out.setZero();
  out(1, m) = -accel_force / (p(m) * p(m));
  out(1, c) = -x(1) / p(m);
  out(1, k) = -x(0) / p(m);
  out(1, alpha) = -x(0) * x(0) * x(0) / p(m);
  out(1, F) = x(3) / p(m);
  out(2, omega) = x(3);
  out(3, omega) = -x(2);
}

void DuffingOscillator::validate_parameters(ConstVecRef p) const {
  SystemModel::validate_parameters(p);
  if (!(p(m) > 0.0)) throw ModelError("Duffing mass must be positive");
}

std::optional<HarmonicResponse> DuffingOscillator::linear_response(ConstVecRef p) const {
  using C = std::complex<double>;
  const double w = p(omega);
  const C q = p(F) / C(p(k) - w * w * p(m), w * p(c));
  return HarmonicResponse{{q, C(0.0, w) * q, C(0.0, -1.0), C(1.0, 0.0)}, w};
}

// -----------------------------------------------------------------------------
// Parameter builders
// -----------------------------------------------------------------------------

ParameterSet two_mode_parameters(const TwoModeParameters& row, double omega) {
  if (!(row.m1 > 0.0) || !(row.m2 > 0.0)) throw ModelError("two-mode masses must be positive");
  TwoModeOscillator model;
  ParameterSet set;
  set.names = model.parameter_names();
  set.values.resize(TwoModeOscillator::count);
  set.values << row.m1, row.m2, row.c1, row.c2, row.c3, row.k1, row.k2, row.k3, row.alpha1, row.alpha2, row.alpha3,
      row.F1, row.F2, omega;
  set.lambda_index = TwoModeOscillator::omega;
  set.validate();
  return set;
}

ParameterSet duffing_parameters(double m, double c, double k, double alpha, double F, double omega) {
  if (!(m > 0.0)) throw ModelError("Duffing mass must be positive");
  DuffingOscillator model;
  ParameterSet set;
  set.names = model.parameter_names();
  set.values.resize(DuffingOscillator::count);
  set.values << m, c, k, alpha, F, omega;
  set.lambda_index = DuffingOscillator::omega;
  set.validate();
  return set;
}

std::pair<double, double> linear_natural_frequencies(const ParameterSet& p) {
  const double m1 = p["m1"], m2 = p["m2"];
  if (!(m1 > 0.0) || !(m2 > 0.0)) throw ModelError("two-mode masses must be positive");
  const double k1 = p["k1"], k2 = p["k2"], k3 = p["k3"];
  Eigen::Matrix2d stiffness;
  stiffness << k1 + k2, -k2, -k2, k2 + k3;
  // Symmetrised M^-1/2 K M^-1/2 shares eigenvalues with M^-1 K.
  const Eigen::Vector2d inv_sqrt_mass(1.0 / std::sqrt(m1), 1.0 / std::sqrt(m2));
  const Eigen::Matrix2d sym = inv_sqrt_mass.asDiagonal() * stiffness * inv_sqrt_mass.asDiagonal();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> solver(sym);
  const Eigen::Vector2d eig = solver.eigenvalues();
  if (!(eig(0) > 0.0)) {
    std::ostringstream msg;
    msg << "stiffness matrix is not positive definite (eigenvalues " << eig(0) << ", " << eig(1) << ")";
    throw ModelError(msg.str());
  }
  return {std::sqrt(eig(0)), std::sqrt(eig(1))};
}

// -----------------------------------------------------------------------------
// Self-checks
// -----------------------------------------------------------------------------

namespace {

double relative_gap(const Mat& analytic, const Mat& numeric) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.rows(); ++i)
    for (Eigen::Index j = 0; j < analytic.cols(); ++j)
      worst = std::max(worst, std::abs(analytic(i, j) - numeric(i, j)) / std::max(1.0, std::abs(numeric(i, j))));
  return worst;
}

}  // namespace

JacobianCheck check_jacobians(const SystemModel& model, const Vec& x, const Vec& p, double step) {
  const int n = model.dimension();
  const int np = model.num_parameters();
  Mat fd_state(n, n), fd_param(n, np);
  for (int j = 0; j < n; ++j) {
    const double h = step * (1.0 + std::abs(x(j)));
    Vec xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    fd_state.col(j) = (model.rhs(xp, p) - model.rhs(xm, p)) / (2.0 * h);
  }
  for (int j = 0; j < np; ++j) {
    const double h = step * (1.0 + std::abs(p(j)));
    Vec pp = p, pm = p;
    pp(j) += h;
    pm(j) -= h;
    fd_param.col(j) = (model.rhs(x, pp) - model.rhs(x, pm)) / (2.0 * h);
  }
  return {relative_gap(model.state_jacobian(x, p), fd_state), relative_gap(model.param_jacobian(x, p), fd_param)};
}

JacobianCheck check_metric_gradients(const Metric& metric, const Vec& x, const Vec& p, double step) {
  Vec fd_x(x.size()), fd_p(p.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = step * (1.0 + std::abs(x(j)));
    Vec xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    fd_x(j) = (metric.value(xp, p) - metric.value(xm, p)) / (2.0 * h);
  }
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    const double h = step * (1.0 + std::abs(p(j)));
    Vec pp = p, pm = p;
    pp(j) += h;
    pm(j) -= h;
    fd_p(j) = (metric.value(x, pp) - metric.value(x, pm)) / (2.0 * h);
  }
  return {relative_gap(metric.state_gradient(x, p), fd_x), relative_gap(metric.param_gradient(x, p), fd_p)};
}

}  // namespace uqcont
