#include "uqcont/harness/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "uqcont/parallel.hpp"

namespace uqcont::harness {

namespace {

double radical_inverse(int index, int base) {
  double result = 0.0, f = 1.0 / base;
  for (int i = index; i > 0; i /= base, f /= base) result += f * (i % base);
  return result;
}

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};

/// Points of the Halton sequence in [-1, 1]^m that fall inside the unit ball
/// (away from the origin), projected onto the sphere.
std::vector<Vec> halton_directions(int m, int count) {
  if (m > static_cast<int>(std::size(kPrimes))) throw ConfigError("oracle: too many uncertain parameters for sampling");
  std::vector<Vec> out;
  for (int i = 1; static_cast<int>(out.size()) < count; ++i) {
    Vec v(m);
    for (int k = 0; k < m; ++k) v(k) = 2.0 * radical_inverse(i, kPrimes[k]) - 1.0;
    const double norm = v.norm();
    if (norm > 1.0 || norm < 0.1) continue;
    out.push_back(v / norm);
  }
  return out;
}

/// Scaled distance between the periodic orbits through a and b at p. With a
/// forcing pair, a is first carried along its orbit to the forcing phase of b,
/// so the result does not depend on where each orbit was cut.
double orbit_distance(const OracleInputs& in, const Vec& p, double T, const Vec& a, const Vec& b, const Vec& scale) {
  const auto& model = *in.system->model;
  const auto k = model.forcing_phase_state();
  if (!k) return (a - b).cwiseQuotient(scale).norm();
  auto angle = [&](const Vec& x) { return std::atan2(x(*k), x(*k + 1)); };
  double shift = std::fmod((angle(b) - angle(a)) / (2.0 * std::numbers::pi) * T, T);
  if (shift < 0.0) shift += T;
  double best = std::numeric_limits<double>::infinity();
  for (double dt : {shift, T - shift}) {
    const Vec x = dt > 0.0 && dt < T ? Vec(integrate_state(model, p, a, dt, in.integration).x_T) : a;
    best = std::min(best, (x - b).cwiseQuotient(scale).norm());
  }
  return best;
}

/// The orbit of `pt` lies on `curve`: compared with the curve's interpolated
/// orbits at the same lambda.
bool lies_on_curve(const OracleInputs& in, const Branch& curve, const ContinuationPoint& pt) {
  const auto n = pt.x0.size();
  const Vec scale = curve.scale.head(n);
  const Vec p = in.system->realize(pt.lambda, pt.eps).p;
  for (const Vec& u : branch_unknowns_at(curve, pt.lambda))
    if (orbit_distance(in, p, pt.period, u.head(n), pt.x0, scale) < 1e-3) return true;
  return false;
}

/// Response curves start where the metric peaks over the orbit; moves pt
/// there (a homotopy may end on another extremum in time).
ContinuationPoint at_global_peak(const OracleInputs& in, const ContinuationPoint& pt) {
  const auto& sys = *in.system;
  const Vec p = sys.realize(pt.lambda, pt.eps).p;
  IntegrationSettings dense = in.integration;
  dense.dense_output = true;
  const auto traj = integrate_state(*sys.model, p, pt.x0, pt.period, dense).trajectory;
  const auto best = std::max_element(traj.states.begin(), traj.states.end(), [&](const Vec& a, const Vec& b) {
    return sys.metric->value(a, p) < sys.metric->value(b, p);
  });
  if (best == traj.states.end() || sys.metric->value(*best, p) <= pt.metric_value) return pt;
  const auto res = solve_periodic_orbit(*sys.model, *sys.metric, p, *best, pt.period, in.integration);
  if (!res.converged() || res.orbit.metric_value <= pt.metric_value) return pt;
  ContinuationPoint out = pt;
  out.x0 = res.orbit.x0;
  out.period = res.orbit.period;
  out.metric_value = res.orbit.metric_value;
  return out;
}

Branch trace_both_ways(const OracleInputs& in, const Vec& eps, const Vec& scale, const Vec& x0, double T,
                       double lambda) {
  FrcProblem problem(*in.system, eps, scale, in.integration);
  const Vec u = problem.pack(x0, T, lambda);
  ContinuationStop stop;
  stop.lower = in.lambda_lo;
  stop.upper = in.lambda_hi;
  stop.max_steps = in.continuation.max_steps;
  stop.detect_closed_loop = true;
  Branch forward = continue_branch(problem, u, +1, stop, in.continuation);
  forward.driver = "frc-detached";
  forward.scale = problem.scale();
  if (forward.termination == Termination::closed_loop) return forward;

  stop.detect_closed_loop = false;
  Branch backward = continue_branch(problem, u, -1, stop, in.continuation);
  Branch merged = forward;
  merged.points.clear();
  for (auto it = backward.points.rbegin(); it != backward.points.rend(); ++it) {
    if (it + 1 == backward.points.rend()) break;  // shared start point
    ContinuationPoint p = *it;
    p.tangent = -p.tangent;
    merged.points.push_back(std::move(p));
  }
  merged.points.insert(merged.points.end(), forward.points.begin(), forward.points.end());
  merged.arclength = forward.arclength + backward.arclength;
  if (backward.termination != Termination::range_exit) merged.termination = backward.termination;
  return merged;
}

/// Newton can settle on a multiple of the forcing period.
bool at_forcing_period(double lambda, double T) {
  return std::abs(T * lambda / (2.0 * std::numbers::pi) - 1.0) < 1e-6;
}

/// Orbit at (eps, lambda) reached from a reference orbit: Newton first, then
/// a homotopy in eps if Newton fails.
std::optional<ContinuationPoint> continue_to_sample(const OracleInputs& in, const Vec& eps, const Vec& scale,
                                                    const ContinuationPoint& probe) {
  const auto& sys = *in.system;
  const auto p = sys.realize(probe.lambda, eps).p;
  const auto direct = solve_periodic_orbit(*sys.model, *sys.metric, p, probe.x0, probe.period, in.integration);
  if (direct.converged() && at_forcing_period(probe.lambda, direct.orbit.period)) {
    ContinuationPoint pt;
    pt.x0 = direct.orbit.x0;
    pt.period = direct.orbit.period;
    pt.lambda = probe.lambda;
    pt.eps = eps;
    pt.metric_value = direct.orbit.metric_value;
    return pt;
  }
  const int n = sys.dimension();
  Vec ray_scale(n + 2);
  ray_scale << scale.head(n + 1), 1.0;
  RayProblem ray(sys, eps, probe.lambda, ray_scale, in.integration);
  Vec u(n + 2);
  u << probe.x0, probe.period, 0.0;
  ContinuationStop stop;
  stop.lower = -0.5;
  stop.upper = 1.0;
  stop.max_steps = 500;
  const Branch path = continue_branch(ray, u, +1, stop, in.continuation);
  if (path.termination != Termination::range_exit || path.points.empty()) return std::nullopt;
  const auto& last = path.points.back();
  if (std::abs(last.unknowns(n + 1) - 1.0) > 1e-12) return std::nullopt;
  ContinuationPoint pt = last;
  if (!at_forcing_period(pt.lambda, pt.period)) return std::nullopt;
  pt.eps = eps;
  return pt;
}

}  // namespace

std::vector<Vec> uncertainty_samples(int m, double R, int rings, int angles) {
  std::vector<Vec> out;
  if (R == 0.0) {
    out.push_back(Vec::Zero(m));
    return out;
  }
  std::vector<Vec> dirs;
  if (m == 2) {
    for (int j = 0; j < angles; ++j) {
      const double a = 2.0 * std::numbers::pi * j / angles;
      Vec d(2);
      d << std::cos(a), std::sin(a);
      dirs.push_back(d);
    }
  } else if (m == 1) {
    dirs = {Vec::Constant(1, 1.0), Vec::Constant(1, -1.0)};
  } else {
    dirs = halton_directions(m, angles);
  }
  for (int k = 1; k <= rings; ++k)
    for (const auto& d : dirs) out.push_back(R * static_cast<double>(k) / rings * d);
  return out;
}

RayProblem::RayProblem(const UncertainSystem& system, Vec target, double lambda, Vec scale,
                       IntegrationSettings integration)
    : system_(system), target_(std::move(target)), lambda_(lambda), scale_(std::move(scale)),
      integration_(integration), n_(system.dimension()) {
  if (scale_.size() != n_ + 2) throw ModelError("RayProblem: scale must have N + 2 entries");
  if (target_.size() != system.num_uncertain()) throw ModelError("RayProblem: target has the wrong length");
}

ZeroProblem::Evaluation RayProblem::evaluate(const Vec& u, bool with_jacobian, const StepMesh* replay) const {
  const auto& model = *system_.model;
  const auto& metric = *system_.metric;
  const Vec x0 = u.head(n_);
  const double T = u(n_);
  const double s = u(n_ + 1);
  const auto real = system_.realize(lambda_, s * target_);

  Evaluation e;
  e.residual.resize(n_ + 1);
  e.residual(n_) = phase_residual(model, metric, real.p, x0);
  if (!with_jacobian) {
    auto res = integrate_state(model, real.p, x0, T, integration_, replay);
    e.residual.head(n_) = res.x_T - x0;
    e.mesh = std::move(res.mesh);
    return e;
  }
  const Vec dir = real.dp_deps * target_;
  auto aug = integrate_augmented(model, real.p, x0, T, dir, integration_, replay);
  e.residual.head(n_) = aug.x_T - x0;
  e.jacobian = Mat::Zero(n_ + 1, n_ + 2);
  e.jacobian.topLeftCorner(n_, n_) = aug.monodromy - Mat::Identity(n_, n_);
  e.jacobian.block(0, n_, n_, 1) = model.rhs(aug.x_T, real.p);
  e.jacobian.block(0, n_ + 1, n_, 1) = aug.sensitivity.col(0);
  e.jacobian.block(n_, 0, 1, n_) = phase_residual_state_gradient(model, metric, real.p, x0).transpose();
  e.jacobian(n_, n_ + 1) = phase_residual_param_gradient(model, metric, real.p, x0).dot(dir);
  e.mesh = std::move(aug.mesh);
  return e;
}

ContinuationPoint RayProblem::point(const Vec& u) const {
  ContinuationPoint pt;
  pt.x0 = u.head(n_);
  pt.period = u(n_);
  pt.lambda = lambda_;
  pt.eps = u(n_ + 1) * target_;
  pt.r = pt.eps.norm();
  pt.metric_value = system_.metric->value(pt.x0, system_.realize(lambda_, pt.eps).p);
  pt.unknowns = u;
  return pt;
}

OracleSample trace_sample(const OracleInputs& in, const Vec& eps, const std::vector<ContinuationPoint>& probes) {
  OracleSample out;
  out.eps = eps;
  try {
    out.primary = trace_frc(*in.system, eps, in.lambda_lo, in.lambda_hi, in.continuation, in.integration);
  } catch (const std::exception& e) {
    out.failure = e.what();
    return out;
  }
  if (out.primary.termination != Termination::range_exit) {
    out.failure = "response curve stopped: " + std::string(to_string(out.primary.termination));
    return out;
  }
  out.ok = true;
  if (!in.settings.detect_detached || eps.norm() == 0.0) return out;

  for (const auto& probe : probes) {
    std::optional<ContinuationPoint> hit;
    try {
      hit = continue_to_sample(in, eps, out.primary.scale, probe);
    } catch (const std::exception&) {
      continue;  // homotopy failures only cost detection coverage
    }
    if (!hit) continue;
    if (lies_on_curve(in, out.primary, *hit)) continue;
    if (std::any_of(out.detached.begin(), out.detached.end(),
                    [&](const Branch& b) { return lies_on_curve(in, b, *hit); }))
      continue;
    try {
      const ContinuationPoint start = at_global_peak(in, *hit);
      Branch b = trace_both_ways(in, eps, out.primary.scale, start.x0, start.period, start.lambda);
      if (b.points.size() >= 2) out.detached.push_back(std::move(b));
    } catch (const std::exception&) {
    }
  }
  return out;
}

EnvelopeReport compare_envelopes(const OracleInputs& in, const std::vector<OracleSample>& samples) {
  EnvelopeReport rep;
  const auto& sys = *in.system;
  const auto& cfg = in.settings;
  rep.samples = static_cast<int>(samples.size());

  double g_scale = 0.0;
  if (in.reference_frc)
    for (const auto& p : in.reference_frc->points) g_scale = std::max(g_scale, std::abs(p.metric_value));
  for (const auto& s : samples) {
    if (!s.ok) {
      ++rep.failures;
      rep.failure_messages.push_back(s.failure);
      continue;
    }
    if (g_scale == 0.0)
      for (const auto& p : s.primary.points) g_scale = std::max(g_scale, std::abs(p.metric_value));
    if (!s.detached.empty()) {
      if (rep.detached_samples == 0) {
        rep.detached_lo = std::numeric_limits<double>::infinity();
        rep.detached_hi = -std::numeric_limits<double>::infinity();
      }
      ++rep.detached_samples;
      for (const auto& b : s.detached)
        for (const auto& p : b.points) {
          rep.detached_lo = std::min(rep.detached_lo, p.lambda);
          rep.detached_hi = std::max(rep.detached_hi, p.lambda);
        }
    }
  }
  rep.failure_fraction_ok = rep.samples == 0 || rep.failures <= cfg.max_failure_fraction * rep.samples;
  const double floor = std::max(cfg.relative_floor * g_scale, 1e-300);

  for (const Branch* b : in.margins)
    for (double f : branch_folds(*b)) rep.folds.push_back(f);
  if (in.reference_frc)
    for (double f : branch_folds(*in.reference_frc)) rep.folds.push_back(f);
  std::sort(rep.folds.begin(), rep.folds.end());

  const int nbins = static_cast<int>(std::floor((in.lambda_hi - in.lambda_lo) / cfg.bin_width + 1e-9));
  struct BinValues {
    std::vector<double> oracle, margin;
  };
  std::vector<BinValues> values(static_cast<std::size_t>(std::max(nbins, 0)));
  auto centre = [&](std::size_t i) { return in.lambda_lo + (static_cast<double>(i) + 0.5) * cfg.bin_width; };
  parallel_for(values.size(), in.threads, [&](std::size_t i) {
    const double lambda = centre(i);
    auto& v = values[i];
    auto add = [&](std::vector<double>& to, const Branch& b) {
      for (double g : branch_orbit_values_at(sys, b, lambda, in.integration)) to.push_back(g);
    };
    for (const auto& s : samples) {
      if (!s.ok) continue;
      add(v.oracle, s.primary);
      for (const auto& b : s.detached) add(v.oracle, b);
    }
    for (const Branch* b : in.margins) add(v.margin, *b);
  });

  for (std::size_t i = 0; i < values.size(); ++i) {
    EnvelopeBin bin;
    bin.lambda = centre(i);
    const auto& oracle = values[i].oracle;
    const auto& margin = values[i].margin;
    if (oracle.empty()) continue;
    bin.oracle_max = *std::max_element(oracle.begin(), oracle.end());
    bin.oracle_min = *std::min_element(oracle.begin(), oracle.end());
    bin.near_fold = std::any_of(rep.folds.begin(), rep.folds.end(),
                                [&](double f) { return std::abs(f - bin.lambda) <= cfg.fold_margin; });
    bin.covered = !margin.empty();
    if (!bin.covered) {
      ++rep.uncovered_bins;
      rep.bins.push_back(bin);
      continue;
    }
    bin.margin_max = *std::max_element(margin.begin(), margin.end());
    bin.margin_min = *std::min_element(margin.begin(), margin.end());
    const double up = std::max(std::abs(bin.margin_max), floor);
    const double down = std::max(std::abs(bin.margin_min), floor);
    bin.violation = std::max({(bin.oracle_max - bin.margin_max) / up, (bin.margin_min - bin.oracle_min) / down, 0.0});
    bin.slack = std::max({(bin.margin_max - bin.oracle_max) / up, (bin.oracle_min - bin.margin_min) / down, 0.0});
    if (bin.violation > rep.max_violation) {
      rep.max_violation = bin.violation;
      rep.violation_lambda = bin.lambda;
    }
    if (!bin.near_fold && bin.slack > rep.max_slack) {
      rep.max_slack = bin.slack;
      rep.slack_lambda = bin.lambda;
    }
    rep.bins.push_back(bin);
  }
  rep.violation_ok = rep.max_violation <= cfg.violation_tol;
  rep.slack_ok = rep.max_slack <= cfg.slack_tol;
  return rep;
}

EnvelopeReport grid_validate(const OracleInputs& in) {
  if (!in.system) throw ConfigError("grid_validate: no system");
  const auto eps = uncertainty_samples(in.system->num_uncertain(), in.R, in.settings.rings, in.settings.angles);

  std::vector<ContinuationPoint> probes;
  if (in.settings.detect_detached && in.R > 0.0 && in.reference_frc) {
    const double step = in.settings.probe_spacing;
    for (double lambda = in.lambda_lo + 0.5 * step; lambda < in.lambda_hi; lambda += step)
      for (auto& p : frc_points_at(*in.system, *in.reference_frc, lambda, in.continuation, in.integration))
        probes.push_back(std::move(p));
  }

  std::vector<OracleSample> samples(eps.size());
  parallel_for(eps.size(), in.threads, [&](std::size_t i) { samples[i] = trace_sample(in, eps[i], probes); });
  return compare_envelopes(in, samples);
}

}  // namespace uqcont::harness
