#pragma once

// Dynamical system descriptions, parameter/uncertainty maps and the
// uncertainty-sphere geometry shared by every solver in the library.

#include <complex>
#include <cstddef>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace uqcont {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecRef = Eigen::Ref<Vec>;
using MatRef = Eigen::Ref<Mat>;
using ConstVecRef = Eigen::Ref<const Vec>;
using ConstMatRef = Eigen::Ref<const Mat>;

/// Raised for malformed models, parameter sets or uncertainty maps.
class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when the sphere tangent basis is requested at the origin.
class DegenerateOriginError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// -----------------------------------------------------------------------------
// Parameters
// -----------------------------------------------------------------------------

/// Named reference parameter vector p0 with the bifurcation parameter marked.
/// Names follow the owning model's canonical ordering.
struct ParameterSet {
  std::vector<std::string> names;
  Vec values;
  std::size_t lambda_index = 0;

  [[nodiscard]] std::size_t size() const noexcept { return names.size(); }
  [[nodiscard]] std::size_t index_of(std::string_view name) const;
  [[nodiscard]] std::optional<std::size_t> find(std::string_view name) const noexcept;
  [[nodiscard]] double operator[](std::string_view name) const { return values(static_cast<Eigen::Index>(index_of(name))); }
  [[nodiscard]] double lambda() const { return values(static_cast<Eigen::Index>(lambda_index)); }
  [[nodiscard]] ParameterSet with_lambda(double lambda) const;
  [[nodiscard]] ParameterSet with(std::string_view name, double value) const;

  /// Throws ModelError unless sizes agree, entries are finite and the
  /// lambda index is in range.
  void validate() const;
};

enum class UncertaintyKind { proportional };

struct UncertainParameter {
  std::string name;
  UncertaintyKind kind = UncertaintyKind::proportional;
};

/// Ordered list of uncertain parameters; entry m of eps acts on entries[m].
struct UncertaintyMap {
  std::vector<UncertainParameter> entries;

  [[nodiscard]] std::size_t size() const noexcept { return entries.size(); }
  /// Throws ModelError on unknown names, duplicates, or an uncertain
  /// bifurcation parameter.
  void validate(const ParameterSet& reference) const;
};

/// Realized parameter vector together with dp/deps (P x M).
struct RealizedParameters {
  Vec p;
  Mat dp_deps;
};

/// p_k = p0_k (1 + eps_m) on mapped entries, unchanged elsewhere.
[[nodiscard]] RealizedParameters apply_uncertainty(const ParameterSet& reference, const UncertaintyMap& map,
                                                   const Vec& eps);

// -----------------------------------------------------------------------------
// Uncertainty sphere
// -----------------------------------------------------------------------------

/// sum(eps_m^2) - r^2
[[nodiscard]] double sphere_residual(const Vec& eps, double r) noexcept;

/// Index of the largest-magnitude entry (first one on ties).
[[nodiscard]] Eigen::Index tangent_basis_pivot(const Vec& eps);

/// (M-1) x M matrix whose rows are an orthonormal basis of the plane
/// orthogonal to eps. Built from the Householder reflector that maps eps/|eps|
/// onto the pivot axis, so the result is a smooth function of eps as long as
/// the pivot does not change.
[[nodiscard]] Mat sphere_tangent_basis(const Vec& eps);
[[nodiscard]] Mat sphere_tangent_basis(const Vec& eps, Eigen::Index pivot);

// -----------------------------------------------------------------------------
// Models and metrics
// -----------------------------------------------------------------------------

/// Complex steady-state amplitudes of every state for a harmonically forced
/// linearisation: x_i(t) = Re(a_i exp(i omega t)).
struct HarmonicResponse {
  std::vector<std::complex<double>> amplitudes;
  double omega = 0.0;
};

/// Autonomous ODE dx/dt = F(x, p) with analytic Jacobians.
class SystemModel {
 public:
  virtual ~SystemModel() = default;

  [[nodiscard]] virtual std::string_view name() const noexcept = 0;
  [[nodiscard]] virtual int dimension() const noexcept = 0;
  [[nodiscard]] virtual const std::vector<std::string>& parameter_names() const noexcept = 0;

  virtual void rhs(ConstVecRef x, ConstVecRef p, VecRef out) const = 0;
  /// A = dF/dx, N x N.
  virtual void state_jacobian(ConstVecRef x, ConstVecRef p, MatRef out) const = 0;
  /// dF/dp, N x P.
  virtual void param_jacobian(ConstVecRef x, ConstVecRef p, MatRef out) const = 0;

  /// Throws ModelError if p is outside the model's admissible set.
  virtual void validate_parameters(ConstVecRef p) const;

  /// Linearised forced response, used to seed periodic-orbit solves far from
  /// resonance. Models without one return nullopt.
  [[nodiscard]] virtual std::optional<HarmonicResponse> linear_response(ConstVecRef p) const;

  /// State of the forcing pair that vanishes at the forcing peak, if any.
  [[nodiscard]] virtual std::optional<int> forcing_phase_state() const noexcept { return std::nullopt; }

  [[nodiscard]] int num_parameters() const noexcept { return static_cast<int>(parameter_names().size()); }
  [[nodiscard]] Vec rhs(ConstVecRef x, ConstVecRef p) const;
  [[nodiscard]] Mat state_jacobian(ConstVecRef x, ConstVecRef p) const;
  [[nodiscard]] Mat param_jacobian(ConstVecRef x, ConstVecRef p) const;
};

/// Scalar performance metric g(x, p).
///
/// The phase condition and its derivatives assume that the state gradient of
/// g does not depend on p (true for every metric shipped here).
class Metric {
 public:
  virtual ~Metric() = default;
  [[nodiscard]] virtual std::string label() const = 0;
  [[nodiscard]] virtual double value(ConstVecRef x, ConstVecRef p) const = 0;
  virtual void state_gradient(ConstVecRef x, ConstVecRef p, VecRef out) const = 0;
  virtual void param_gradient(ConstVecRef x, ConstVecRef p, VecRef out) const = 0;
  virtual void state_hessian(ConstVecRef x, ConstVecRef p, MatRef out) const = 0;

  [[nodiscard]] Vec state_gradient(ConstVecRef x, ConstVecRef p) const;
  [[nodiscard]] Vec param_gradient(ConstVecRef x, ConstVecRef p) const;
  [[nodiscard]] Mat state_hessian(ConstVecRef x, ConstVecRef p) const;
};

/// g(x, p) = x[index].
class CoordinateMetric final : public Metric {
 public:
  CoordinateMetric(int index, std::string label) : index_(index), label_(std::move(label)) {}

  [[nodiscard]] std::string label() const override { return label_; }
  [[nodiscard]] int index() const noexcept { return index_; }
  [[nodiscard]] double value(ConstVecRef x, ConstVecRef p) const override;
  using Metric::param_gradient;
  using Metric::state_gradient;
  using Metric::state_hessian;
  void state_gradient(ConstVecRef x, ConstVecRef p, VecRef out) const override;
  void param_gradient(ConstVecRef x, ConstVecRef p, VecRef out) const override;
  void state_hessian(ConstVecRef x, ConstVecRef p, MatRef out) const override;

 private:
  int index_;
  std::string label_;
};

/// Everything the solvers need: dynamics, metric, reference parameters
/// (with the bifurcation parameter) and the uncertainty map.
struct UncertainSystem {
  std::shared_ptr<const SystemModel> model;
  std::shared_ptr<const Metric> metric;
  ParameterSet reference;
  UncertaintyMap uncertainty;

  [[nodiscard]] int dimension() const noexcept { return model->dimension(); }
  [[nodiscard]] int num_uncertain() const noexcept { return static_cast<int>(uncertainty.size()); }
  [[nodiscard]] int num_parameters() const noexcept { return static_cast<int>(reference.size()); }

  /// p = P(p0(lambda), eps).
  [[nodiscard]] RealizedParameters realize(double lambda, const Vec& eps) const;
  /// Unit vector selecting the bifurcation parameter in p.
  [[nodiscard]] Vec lambda_direction() const;

  void validate() const;
};

// -----------------------------------------------------------------------------
// Built-in models
// -----------------------------------------------------------------------------

/// Two coupled cubic oscillators driven through a Stuart-Landau pair.
/// States (q1, dq1, q2, dq2, s1, s2); parameters in canonical order
/// m1 m2 c1 c2 c3 k1 k2 k3 alpha1 alpha2 alpha3 F1 F2 omega.
class TwoModeOscillator final : public SystemModel {
 public:
  enum Param : int { m1, m2, c1, c2, c3, k1, k2, k3, alpha1, alpha2, alpha3, F1, F2, omega, count };

  TwoModeOscillator();

  [[nodiscard]] std::string_view name() const noexcept override { return "two_mode"; }
  [[nodiscard]] int dimension() const noexcept override { return 6; }
  [[nodiscard]] const std::vector<std::string>& parameter_names() const noexcept override { return names_; }
  using SystemModel::param_jacobian;
  using SystemModel::rhs;
  using SystemModel::state_jacobian;
  void rhs(ConstVecRef x, ConstVecRef p, VecRef out) const override;
  void state_jacobian(ConstVecRef x, ConstVecRef p, MatRef out) const override;
  void param_jacobian(ConstVecRef x, ConstVecRef p, MatRef out) const override;
  void validate_parameters(ConstVecRef p) const override;
  [[nodiscard]] std::optional<HarmonicResponse> linear_response(ConstVecRef p) const override;
  [[nodiscard]] std::optional<int> forcing_phase_state() const noexcept override { return 4; }

 private:
  std::vector<std::string> names_;
};

/// Single cubic oscillator m q'' + c q' + k q + alpha q^3 = F cos(omega t),
/// autonomised with the same Stuart-Landau pair. States (q, dq, s1, s2);
/// parameters m c k alpha F omega.
class DuffingOscillator final : public SystemModel {
 public:
  enum Param : int { m, c, k, alpha, F, omega, count };

  DuffingOscillator();

  [[nodiscard]] std::string_view name() const noexcept override { return "duffing"; }
  [[nodiscard]] int dimension() const noexcept override { return 4; }
  [[nodiscard]] const std::vector<std::string>& parameter_names() const noexcept override { return names_; }
  using SystemModel::param_jacobian;
  using SystemModel::rhs;
  using SystemModel::state_jacobian;
  void rhs(ConstVecRef x, ConstVecRef p, VecRef out) const override;
  void state_jacobian(ConstVecRef x, ConstVecRef p, MatRef out) const override;
  void param_jacobian(ConstVecRef x, ConstVecRef p, MatRef out) const override;
  void validate_parameters(ConstVecRef p) const override;
  [[nodiscard]] std::optional<HarmonicResponse> linear_response(ConstVecRef p) const override;
  [[nodiscard]] std::optional<int> forcing_phase_state() const noexcept override { return 2; }

 private:
  std::vector<std::string> names_;
};

/// Reference parameters of a two-mode model (one row of the example table).
struct TwoModeParameters {
  double m1 = 1, m2 = 1;
  double c1 = 0, c2 = 0, c3 = 0;
  double k1 = 1, k2 = 1, k3 = 1;
  double alpha1 = 0, alpha2 = 0, alpha3 = 0;
  double F1 = 0, F2 = 0;
};

/// Builds the parameter set for a two-mode model with omega as lambda.
/// Throws ModelError for nonpositive masses.
[[nodiscard]] ParameterSet two_mode_parameters(const TwoModeParameters& row, double omega);

/// Duffing reference parameters m, c, k, alpha, F with omega as lambda.
[[nodiscard]] ParameterSet duffing_parameters(double m, double c, double k, double alpha, double F, double omega);

/// Undamped linear natural frequencies of the two-mode model, ascending:
/// square roots of the eigenvalues of M^-1 K with
/// K = [[k1 + k2, -k2], [-k2, k2 + k3]].
[[nodiscard]] std::pair<double, double> linear_natural_frequencies(const ParameterSet& p);

// -----------------------------------------------------------------------------
// Self-checks
// -----------------------------------------------------------------------------

struct JacobianCheck {
  double state_error = 0.0;  ///< max relative error of A vs central differences
  double param_error = 0.0;  ///< max relative error of dF/dp vs central differences
};

/// Compares analytic Jacobians with central differences of F at (x, p).
/// Errors are scaled by max(1, |entry|).
[[nodiscard]] JacobianCheck check_jacobians(const SystemModel& model, const Vec& x, const Vec& p, double step = 1e-6);

/// Same comparison for the metric gradients.
[[nodiscard]] JacobianCheck check_metric_gradients(const Metric& metric, const Vec& x, const Vec& p,
                                                   double step = 1e-6);

}  // namespace uqcont
