#include <algorithm>
#include <cmath>

#include "uqcont/continuation.hpp"

namespace uqcont {

Vec typical_state_scale(const UncertainSystem& system, double lambda_lo, double lambda_hi, const Vec& fallback_x0) {
  const int n = system.dimension();
  Vec scale = fallback_x0.cwiseAbs();
  constexpr int kSamples = 101;
  for (int i = 0; i < kSamples; ++i) {
    const double lambda = lambda_lo + (lambda_hi - lambda_lo) * i / (kSamples - 1);
    const auto p = system.realize(lambda, Vec::Zero(system.num_uncertain())).p;
    const auto lin = system.model->linear_response(p);
    if (!lin) break;
    for (int k = 0; k < n; ++k) scale(k) = std::max(scale(k), std::abs(lin->amplitudes[static_cast<std::size_t>(k)]));
  }
  const double floor = std::max(1e-3 * scale.maxCoeff(), 1e-12);
  return scale.cwiseMax(floor);
}

// -----------------------------------------------------------------------------
// FrcProblem
// -----------------------------------------------------------------------------

FrcProblem::FrcProblem(const UncertainSystem& system, Vec eps, Vec scale, IntegrationSettings integration,
                       bool forcing_phase)
    : system_(system), eps_(std::move(eps)), scale_(std::move(scale)), integration_(integration),
      n_(system.dimension()) {
  if (scale_.size() != n_ + 2) throw ModelError("FrcProblem: scale must have N + 2 entries");
  if (eps_.size() != system.num_uncertain()) throw ModelError("FrcProblem: eps has the wrong length");
  if (forcing_phase) {
    const auto state = system.model->forcing_phase_state();
    if (!state) throw ModelError("FrcProblem: model has no forcing pair to pin the phase");
    forcing_state_ = *state;
  }
}

Vec FrcProblem::pack(const Vec& x0, double T, double lambda) const {
  Vec u(n_ + 2);
  u << x0, T, lambda;
  return u;
}

ZeroProblem::Evaluation FrcProblem::evaluate(const Vec& u, bool with_jacobian, const StepMesh* replay) const {
  const auto& model = *system_.model;
  const auto& metric = *system_.metric;
  const Vec x0 = u.head(n_);
  const double T = u(n_);
  const double lambda = u(n_ + 1);
  const Vec p = system_.realize(lambda, eps_).p;

  Evaluation e;
  e.residual.resize(n_ + 1);
  e.residual(n_) = forcing_state_ >= 0 ? x0(forcing_state_) : phase_residual(model, metric, p, x0);
  if (!with_jacobian) {
    auto res = integrate_state(model, p, x0, T, integration_, replay);
    e.residual.head(n_) = res.x_T - x0;
    e.mesh = std::move(res.mesh);
    return e;
  }

  const Vec dir = system_.lambda_direction();
  auto aug = integrate_augmented(model, p, x0, T, dir, integration_, replay);
  e.residual.head(n_) = aug.x_T - x0;
  e.jacobian = Mat::Zero(n_ + 1, n_ + 2);
  e.jacobian.topLeftCorner(n_, n_) = aug.monodromy - Mat::Identity(n_, n_);
  e.jacobian.block(0, n_, n_, 1) = model.rhs(aug.x_T, p);
  e.jacobian.block(0, n_ + 1, n_, 1) = aug.sensitivity.col(0);
  if (forcing_state_ >= 0) {
    e.jacobian(n_, forcing_state_) = 1.0;
  } else {
    e.jacobian.block(n_, 0, 1, n_) = phase_residual_state_gradient(model, metric, p, x0).transpose();
    e.jacobian(n_, n_ + 1) = phase_residual_param_gradient(model, metric, p, x0).dot(dir);
  }
  e.mesh = std::move(aug.mesh);
  return e;
}

ContinuationPoint FrcProblem::point(const Vec& u) const {
  ContinuationPoint pt;
  pt.x0 = u.head(n_);
  pt.eps = eps_;
  pt.r = eps_.norm();
  pt.period = u(n_);
  pt.lambda = u(n_ + 1);
  pt.metric_value = system_.metric->value(pt.x0, system_.realize(pt.lambda, eps_).p);
  pt.unknowns = u;
  return pt;
}

// -----------------------------------------------------------------------------
// MarginProblem
// -----------------------------------------------------------------------------

MarginProblem::MarginProblem(const UncertainSystem& system, MarginMode mode, Vec frozen, const Vec& full_scale,
                             IntegrationSettings integration, double fd_step, double condition_limit)
    : system_(system),
      layout_{system.dimension(), system.num_uncertain()},
      mode_(mode),
      frozen_(std::move(frozen)),
      integration_(integration),
      fd_step_(fd_step),
      condition_limit_(condition_limit) {
  if (frozen_.size() != layout_.size() || full_scale.size() != layout_.size())
    throw ModelError("MarginProblem: full vectors must have N + M + 3 entries");
  for (int i = 0; i < layout_.size(); ++i) {
    const bool frozen_r = (mode_ != MarginMode::expansion) && i == layout_.r();
    const bool frozen_lambda = (mode_ != MarginMode::propagation) && i == layout_.lambda();
    if (frozen_r || frozen_lambda) continue;
    if (mode_ == MarginMode::expansion && i == layout_.r()) parameter_index_ = static_cast<int>(free_.size());
    if (mode_ == MarginMode::propagation && i == layout_.lambda()) parameter_index_ = static_cast<int>(free_.size());
    free_.push_back(i);
  }
  scale_.resize(static_cast<Eigen::Index>(free_.size()));
  for (std::size_t k = 0; k < free_.size(); ++k) scale_(static_cast<Eigen::Index>(k)) = full_scale(free_[k]);
  const Vec eps = frozen_.segment(layout_.eps(), layout_.m);
  if (eps.norm() > 0.0) pivot_ = tangent_basis_pivot(eps);
}

Vec MarginProblem::full(const Vec& u) const {
  Vec v = frozen_;
  for (std::size_t k = 0; k < free_.size(); ++k) v(free_[k]) = u(static_cast<Eigen::Index>(k));
  return v;
}

Vec MarginProblem::reduce(const Vec& v) const {
  Vec u(static_cast<Eigen::Index>(free_.size()));
  for (std::size_t k = 0; k < free_.size(); ++k) u(static_cast<Eigen::Index>(k)) = v(free_[k]);
  return u;
}

void MarginProblem::anchor(const Vec& u) {
  const Vec eps = full(u).segment(layout_.eps(), layout_.m);
  if (eps.norm() > 0.0) pivot_ = tangent_basis_pivot(eps);
}

MarginProblem::Core MarginProblem::evaluate_core(const Vec& v, bool with_lambda_direction,
                                                 const StepMesh* replay) const {
  const auto& model = *system_.model;
  const auto& metric = *system_.metric;
  const int n = layout_.n, m = layout_.m;
  const Vec x0 = v.head(n);
  const Vec eps = v.segment(layout_.eps(), m);
  const double T = v(layout_.period());
  const double lambda = v(layout_.lambda());

  Core c;
  c.real = system_.realize(lambda, eps);
  const auto& p = c.real.p;
  Mat dirs(c.real.dp_deps.rows(), m + (with_lambda_direction ? 1 : 0));
  dirs.leftCols(m) = c.real.dp_deps;
  if (with_lambda_direction) dirs.col(m) = system_.lambda_direction();
  c.aug = integrate_augmented(model, p, x0, T, dirs, integration_, replay);
  c.ft = c.aug.x_T - x0;
  c.lt = phase_residual(model, metric, p, x0);
  if (m > 1) {
    const auto sens = solve_initial_sensitivity(model, metric, p, x0, c.aug.x_T, c.aug.monodromy,
                                                c.aug.sensitivity.leftCols(m), c.real.dp_deps, condition_limit_);
    const Vec grad = metric_uncertainty_gradient(metric, x0, p, sens.S0, c.real.dp_deps);
    c.leps = extremal_uncertainty_residual(grad, eps, pivot_);
  } else {
    c.leps.resize(0);
  }
  return c;
}

namespace {

struct GradientInfo {
  Vec grad;
  int orientation = 0;
};

GradientInfo gradient_info(const UncertainSystem& system, const MarginLayout& layout,
                           const IntegrationSettings& integration, double condition_limit, const Vec& v) {
  const auto& model = *system.model;
  const auto& metric = *system.metric;
  const Vec x0 = v.head(layout.n);
  const Vec eps = v.segment(layout.eps(), layout.m);
  const auto real = system.realize(v(layout.lambda()), eps);
  const auto aug = integrate_augmented(model, real.p, x0, v(layout.period()), real.dp_deps, integration);
  const auto sens = solve_initial_sensitivity(model, metric, real.p, x0, aug.x_T, aug.monodromy, aug.sensitivity,
                                              real.dp_deps, condition_limit);
  return {metric_uncertainty_gradient(metric, x0, real.p, sens.S0, real.dp_deps), sens.orientation};
}

}  // namespace

Vec MarginProblem::uncertainty_gradient(const Vec& v) const {
  return gradient_info(system_, layout_, integration_, condition_limit_, v).grad;
}

ZeroProblem::Evaluation MarginProblem::evaluate(const Vec& u, bool with_jacobian, const StepMesh* replay) const {
  const auto& model = *system_.model;
  const auto& metric = *system_.metric;
  const int n = layout_.n, m = layout_.m;
  const Vec v = full(u);
  const Vec eps = v.segment(layout_.eps(), m);
  const double r = v(layout_.r());
  const bool lambda_free = mode_ == MarginMode::propagation;

  Core c = evaluate_core(v, with_jacobian && lambda_free, replay);
  Evaluation e;
  e.residual.resize(num_equations());
  e.residual.head(n) = c.ft;
  e.residual(n) = eps.squaredNorm() - r * r;
  e.residual(n + 1) = c.lt;
  e.residual.tail(m - 1) = c.leps;
  e.mesh = c.aug.mesh;
  if (!with_jacobian) return e;

  const auto& p = c.real.p;
  const Vec x0 = v.head(n);
  const Vec lt_p = phase_residual_param_gradient(model, metric, p, x0);
  Mat jf = Mat::Zero(num_equations(), layout_.size());
  jf.topLeftCorner(n, n) = c.aug.monodromy - Mat::Identity(n, n);
  jf.block(0, layout_.eps(), n, m) = c.aug.sensitivity.leftCols(m);
  jf.block(0, layout_.period(), n, 1) = model.rhs(c.aug.x_T, p);
  jf.block(n, layout_.eps(), 1, m) = 2.0 * eps.transpose();
  jf(n, layout_.r()) = -2.0 * r;
  jf.block(n + 1, 0, 1, n) = phase_residual_state_gradient(model, metric, p, x0).transpose();
  jf.block(n + 1, layout_.eps(), 1, m) = (c.real.dp_deps.transpose() * lt_p).transpose();
  if (lambda_free) {
    jf.block(0, layout_.lambda(), n, 1) = c.aug.sensitivity.col(m);
    jf(n + 1, layout_.lambda()) = lt_p.dot(system_.lambda_direction());
  }

  // L_eps rows by central differences on the frozen mesh and pivot.
  if (m > 1) {
    for (int col : free_) {
      if (col == layout_.r()) continue;
      const double d = fd_step_ * (1.0 + std::abs(v(col)));
      Vec vp = v, vm = v;
      vp(col) += d;
      vm(col) -= d;
      const Vec lp = evaluate_core(vp, false, &c.aug.mesh).leps;
      const Vec lm = evaluate_core(vm, false, &c.aug.mesh).leps;
      jf.block(n + 2, col, m - 1, 1) = (lp - lm) / (2.0 * d);
    }
  }

  e.jacobian.resize(num_equations(), num_unknowns());
  for (std::size_t k = 0; k < free_.size(); ++k) e.jacobian.col(static_cast<Eigen::Index>(k)) = jf.col(free_[k]);
  return e;
}

ContinuationPoint MarginProblem::point(const Vec& u) const {
  const Vec v = full(u);
  ContinuationPoint pt;
  pt.x0 = v.head(layout_.n);
  pt.eps = v.segment(layout_.eps(), layout_.m);
  pt.r = v(layout_.r());
  pt.period = v(layout_.period());
  pt.lambda = v(layout_.lambda());
  pt.metric_value = system_.metric->value(pt.x0, system_.realize(pt.lambda, pt.eps).p);
  if (pt.r > 0.0) {
    try {
      const auto info = gradient_info(system_, layout_, integration_, condition_limit_, v);
      pt.multiplier = pt.eps.dot(info.grad) / (pt.r * pt.r);
      pt.orientation = info.orientation;
      if (reference_orientation_ != 0 && pt.multiplier != 0.0)
        pt.family = (pt.multiplier > 0.0 ? 1 : -1) * pt.orientation * reference_orientation_;
    } catch (const SensitivityError&) {
    }
  }
  pt.unknowns = u;
  return pt;
}

}  // namespace uqcont
