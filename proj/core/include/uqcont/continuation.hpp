#pragma once

// Pseudo-arclength continuation and the uncertainty expansion/propagation
// drivers built on it.

#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "uqcont/integrate.hpp"
#include "uqcont/models.hpp"
#include "uqcont/orbits.hpp"
#include "uqcont/sensitivity.hpp"

namespace uqcont {

struct ContinuationSettings {
  double h_init = 0.01;
  double h_min = 1e-6;
  double h_max = 0.1;
  double growth = 1.3;
  int easy_iterations = 3;  ///< grow h after steps that needed at most this many iterations
  int max_steps = 20000;
  double tolerance = 1e-9;
  int max_corrector_iterations = 8;
  int max_halvings = 6;
  double min_tangent_dot = 0.8;     ///< reject steps that turn the tangent more than this
  double jacobian_refresh_ratio = 0.3;  ///< chord Newton refreshes J when the residual shrinks slower
  double fd_step = 1e-6;
  double closed_loop_tolerance = 1e-4;
  double closed_loop_min_arclength = 20.0;  ///< in units of h_init
};

enum class Termination { range_exit, max_steps, step_underflow, closed_loop, degenerate_tangent };
[[nodiscard]] std::string_view to_string(Termination t) noexcept;

struct ContinuationPoint {
  Vec x0;
  Vec eps;
  double r = 0.0;
  double period = 0.0;
  double lambda = 0.0;
  Vec tangent;   ///< unit tangent over the scaled free unknowns
  double metric_value = 0.0;
  /// eps . grad_eps g / r^2 on margin points: > 0 where g is maximal over the
  /// uncertainty sphere to first order, < 0 where it is minimal. NaN elsewhere.
  double multiplier = std::numeric_limits<double>::quiet_NaN();
  int orientation = 0;  ///< sign of the bordered orbit Jacobian determinant, 0 if not computed
  /// +1 on the positive (upper) margin, -1 on the negative one, 0 if unknown.
  /// sign(multiplier * orientation) relative to a reference orientation, so
  /// the label carries through folds of the response curve.
  int family = 0;
  Vec unknowns;  ///< free unknowns of the problem that produced the point
};

struct Branch {
  std::vector<ContinuationPoint> points;
  Termination termination = Termination::max_steps;
  std::string driver;
  std::string seed_id;
  int family = 0;  ///< +1 / -1 for margin families, 0 otherwise
  std::vector<ContinuationPoint> events;  ///< located crossings of requested parameter levels
  double arclength = 0.0;
  Vec scale;  ///< scaling of the unknowns the tangents refer to
};

class ContinuationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Residual map y(u) over the free unknowns u, one more unknown than
/// equations for continuation (or square for a plain Newton solve).
class ZeroProblem {
 public:
  struct Evaluation {
    Vec residual;
    Mat jacobian;  ///< empty unless requested
    StepMesh mesh;  ///< integration mesh used
  };

  virtual ~ZeroProblem() = default;
  [[nodiscard]] virtual int num_unknowns() const = 0;
  [[nodiscard]] virtual int num_equations() const = 0;
  /// With `replay` the integrations reuse that mesh, which makes the
  /// discrete residual a smooth function of u.
  [[nodiscard]] virtual Evaluation evaluate(const Vec& u, bool with_jacobian,
                                            const StepMesh* replay = nullptr) const = 0;
  /// Typical magnitude of each unknown; distances and tangents use u / scale.
  [[nodiscard]] virtual const Vec& scale() const = 0;
  /// Index of the nominal continuation parameter within u.
  [[nodiscard]] virtual int parameter_index() const = 0;
  [[nodiscard]] virtual ContinuationPoint point(const Vec& u) const = 0;
  /// Freezes discrete choices (e.g. the sphere-basis pivot) near u.
  virtual void anchor(const Vec& /*u*/) {}
};

/// Unit null vector of the scaled Jacobian (rows = equations). One component
/// is fixed to 1: the largest one of `previous`, else `parameter_index`.
/// Oriented along `previous` when given. nullopt when the bordered system is
/// singular.
[[nodiscard]] std::optional<Vec> compute_tangent(const Mat& scaled_jacobian, const Vec* previous, int parameter_index);

struct CorrectorOutcome {
  bool converged = false;
  Vec u;
  int iterations = 0;
  double residual_norm = 0.0;
  double correction = 0.0;  ///< scaled distance from the predictor
  std::string failure;
};

/// Predictor u + h t (scaled) followed by Newton on [y(u); t^T(w - w~)].
/// `jacobian` is the (unscaled) Jacobian at u, reused as the chord matrix.
[[nodiscard]] CorrectorOutcome predict_correct(const ZeroProblem& problem, const Vec& u, const Vec& tangent, double h,
                                               const ContinuationSettings& settings, const Mat* jacobian = nullptr);

/// Newton on [y(u); u(index) - value] starting from `guess`.
[[nodiscard]] std::optional<Vec> solve_at_level(const ZeroProblem& problem, const Vec& guess, int index, double value,
                                                const ContinuationSettings& settings);

/// Newton on a square problem.
[[nodiscard]] CorrectorOutcome solve_square(const ZeroProblem& problem, const Vec& guess, double tolerance,
                                            int max_iterations);

struct ContinuationStop {
  double lower = -std::numeric_limits<double>::infinity();  ///< parameter range
  double upper = std::numeric_limits<double>::infinity();
  int max_steps = 20000;
  bool detect_closed_loop = false;
  std::vector<double> events;  ///< parameter levels whose crossings are located
};

/// Traces the branch through u_start. `direction` (+1/-1) picks the sign of
/// the initial parameter component of the tangent.
[[nodiscard]] Branch continue_branch(ZeroProblem& problem, const Vec& u_start, int direction,
                                     const ContinuationStop& stop, const ContinuationSettings& settings);

// -----------------------------------------------------------------------------
// Zero problems
// -----------------------------------------------------------------------------

/// Typical per-component magnitude of the state over a lambda range, from
/// the linear response when available. Used for scaling.
[[nodiscard]] Vec typical_state_scale(const UncertainSystem& system, double lambda_lo, double lambda_hi,
                                      const Vec& fallback_x0);

/// [f_t; L_t] in u = (x0, T, lambda) at fixed eps.
class FrcProblem final : public ZeroProblem {
 public:
  /// With `forcing_phase` the time shift is pinned by the forcing pair
  /// (model().forcing_phase_state() = 0) instead of L_t; used when the metric
  /// is stationary along the orbit, e.g. without forcing.
  FrcProblem(const UncertainSystem& system, Vec eps, Vec scale, IntegrationSettings integration,
             bool forcing_phase = false);

  [[nodiscard]] int num_unknowns() const override { return n_ + 2; }
  [[nodiscard]] int num_equations() const override { return n_ + 1; }
  [[nodiscard]] Evaluation evaluate(const Vec& u, bool with_jacobian,
                                    const StepMesh* replay = nullptr) const override;
  [[nodiscard]] const Vec& scale() const override { return scale_; }
  [[nodiscard]] int parameter_index() const override { return n_ + 1; }
  [[nodiscard]] ContinuationPoint point(const Vec& u) const override;

  [[nodiscard]] Vec pack(const Vec& x0, double T, double lambda) const;

 private:
  const UncertainSystem& system_;
  Vec eps_;
  Vec scale_;
  IntegrationSettings integration_;
  int n_;
  int forcing_state_ = -1;
};

/// Layout of the full unknown vector v = [x0; eps; r; T; lambda].
struct MarginLayout {
  int n = 0;
  int m = 0;
  [[nodiscard]] int eps() const { return n; }
  [[nodiscard]] int r() const { return n + m; }
  [[nodiscard]] int period() const { return n + m + 1; }
  [[nodiscard]] int lambda() const { return n + m + 2; }
  [[nodiscard]] int size() const { return n + m + 3; }
};

enum class MarginMode {
  expansion,    ///< lambda frozen; continuation in r
  propagation,  ///< r frozen; continuation in lambda
  fixed_level,  ///< r and lambda frozen; square system
};

/// y = [f_t; f_eps; L_t; L_eps] over the free part of v.
class MarginProblem final : public ZeroProblem {
 public:
  /// `frozen` is a full v supplying the frozen r and/or lambda; `full_scale`
  /// is the scaling of the full v.
  MarginProblem(const UncertainSystem& system, MarginMode mode, Vec frozen, const Vec& full_scale,
                IntegrationSettings integration, double fd_step = 1e-6,
                double condition_limit = kDefaultConditionLimit);

  [[nodiscard]] int num_unknowns() const override { return static_cast<int>(free_.size()); }
  [[nodiscard]] int num_equations() const override { return layout_.n + layout_.m + 1; }
  [[nodiscard]] Evaluation evaluate(const Vec& u, bool with_jacobian,
                                    const StepMesh* replay = nullptr) const override;
  [[nodiscard]] const Vec& scale() const override { return scale_; }
  [[nodiscard]] int parameter_index() const override { return parameter_index_; }
  [[nodiscard]] ContinuationPoint point(const Vec& u) const override;
  void anchor(const Vec& u) override;

  [[nodiscard]] const MarginLayout& layout() const noexcept { return layout_; }
  [[nodiscard]] Vec full(const Vec& u) const;
  [[nodiscard]] Vec reduce(const Vec& v) const;
  /// grad_eps g at v (diagnostics and initialization).
  [[nodiscard]] Vec uncertainty_gradient(const Vec& v) const;
  /// Orientation of a single-valued, low-frequency orbit; enables the
  /// per-point family label.
  void set_reference_orientation(int sign) noexcept { reference_orientation_ = sign; }

 private:
  struct Core {
    Vec ft;
    double lt = 0.0;
    Vec leps;
    AugmentedResult aug;
    RealizedParameters real;
  };
  Core evaluate_core(const Vec& v, bool with_lambda_direction, const StepMesh* replay) const;

  const UncertainSystem& system_;
  MarginLayout layout_;
  MarginMode mode_;
  Vec frozen_;
  std::vector<int> free_;
  Vec scale_;
  int parameter_index_ = 0;
  IntegrationSettings integration_;
  double fd_step_;
  double condition_limit_;
  Eigen::Index pivot_ = 0;
  int reference_orientation_ = 0;
};

// -----------------------------------------------------------------------------
// Drivers
// -----------------------------------------------------------------------------

/// Forced response curve at fixed eps over [lambda_lo, lambda_hi], started
/// from the forced orbit at lambda_lo.
[[nodiscard]] Branch trace_frc(const UncertainSystem& system, const Vec& eps, double lambda_lo, double lambda_hi,
                               const ContinuationSettings& settings, const IntegrationSettings& integration);

/// Orbits of a traced FRC at a given lambda (every located crossing).
[[nodiscard]] std::vector<ContinuationPoint> frc_points_at(const UncertainSystem& system, const Branch& frc,
                                                           double lambda, const ContinuationSettings& settings,
                                                           const IntegrationSettings& integration);

struct MarginOptions {
  ContinuationSettings continuation;
  IntegrationSettings integration;
  double lambda_lo = 0.5;
  double lambda_hi = 2.2;
  double r0_fraction = 1e-3;
  double overshoot = 1.5;  ///< expansion traces r up to overshoot * R
  bool both_signs = true;
  int threads = 1;
  /// Orientation that labels the positive family; 0 takes it from the
  /// reference forced orbit at lambda_lo.
  int reference_orientation = 0;
};

/// Sign of the bordered orbit Jacobian determinant for the reference forced
/// orbit at options.lambda_lo, or options.reference_orientation if set.
[[nodiscard]] int reference_orientation(const UncertainSystem& system, const MarginOptions& options);

struct ExpansionResult {
  ContinuationPoint reference;
  Vec gradient;  ///< grad_eps g at the reference orbit
  std::vector<ContinuationPoint> marginal;  ///< every r = R crossing; tangent empty
  std::vector<int> marginal_family;
  std::vector<Branch> branches;  ///< one per initialization sign
};

/// Step 1: from the reference orbit (eps = 0) out to r = R at fixed lambda.
[[nodiscard]] ExpansionResult expand_uncertainty(const UncertainSystem& system, const ContinuationPoint& reference,
                                                 double R, const MarginOptions& options);

struct MarginSeed {
  ContinuationPoint point;
  int family = 0;
  std::string id;
};

/// Scaling of v = [x0; eps; r; T; lambda] shared by every margin problem of
/// one run.
[[nodiscard]] Vec margin_scale(const UncertainSystem& system, double R, const MarginOptions& options,
                               const Vec& x0_hint);

/// Step 2: margin branches over lambda at r = R from every seed, with
/// closed-loop detection and deduplication. Seeds are processed in order.
[[nodiscard]] std::vector<Branch> propagate_margins(const UncertainSystem& system, const std::vector<MarginSeed>& seeds,
                                                    double R, const MarginOptions& options,
                                                    std::vector<std::string>* diagnostics = nullptr);

/// True when u (free unknowns of `problem`) lies on `branch` within `tol`
/// scaled distance, judged by correcting from the nearest branch points onto
/// the hyperplane through u.
[[nodiscard]] bool lies_on_branch(ZeroProblem& problem, const Branch& branch, const Vec& u,
                                  const ContinuationSettings& settings, double tol = 1e-6);

struct MarginRun {
  Branch reference_frc;
  std::vector<MarginSeed> seeds;
  std::vector<Branch> branches;
  std::vector<std::string> diagnostics;  ///< expansions that failed, skipped duplicate seeds
};

/// Reference FRC, expansion at every orbit of every seed lambda, then
/// propagation of all marginal points.
[[nodiscard]] MarginRun compute_margins(const UncertainSystem& system, double R, const std::vector<double>& seed_lambdas,
                                        const MarginOptions& options);

/// Free unknowns where `branch` crosses `lambda`, interpolated as in
/// branch_values_at.
[[nodiscard]] std::vector<Vec> branch_unknowns_at(const Branch& branch, double lambda);

/// Metric values where `branch` crosses `lambda`. Segments are cubic Hermite
/// curves through the scaled unknowns and tangents, so values are accurate to
/// fourth order in the step length; segments without tangents are linear.
/// The parameter is the last unknown; eps comes from the unknowns when they
/// hold it (margin branches) and from the points otherwise (FRC branches).
[[nodiscard]] std::vector<double> branch_values_at(const UncertainSystem& system, const Branch& branch,
                                                   double lambda);

/// As branch_values_at, but each interpolated state seeds a periodic orbit
/// solve at the interpolated eps (rescaled onto the sphere for margin
/// branches). Falls back to the interpolated value where Newton fails.
[[nodiscard]] std::vector<double> branch_orbit_values_at(const UncertainSystem& system, const Branch& branch,
                                                         double lambda, const IntegrationSettings& integration);

/// Lambda values where the branch turns back (folds in the parameter).
[[nodiscard]] std::vector<double> branch_folds(const Branch& branch);

/// Smallest scaled distance between points of `a` and segments of `b`,
/// measured over the unknowns (both branches must share one layout).
[[nodiscard]] double branch_separation(const Branch& a, const Branch& b);

/// True when some negative-family branch closes on itself.
[[nodiscard]] bool has_negative_isola(const std::vector<Branch>& branches);

/// Bisection on a monotone predicate: false at lo, true at hi. Returns the
/// bracket midpoint once its width drops below tol. Throws
/// std::invalid_argument if the predicate does not change sign on the
/// bracket.
[[nodiscard]] double locate_critical_level(const std::function<bool(double)>& predicate, double lo, double hi,
                                           double tol);

}  // namespace uqcont
