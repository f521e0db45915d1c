#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "uqcont/continuation.hpp"
#include "uqcont/parallel.hpp"

namespace uqcont {

namespace {

Vec frc_scale(const UncertainSystem& system, double lo, double hi, const Vec& x0) {
  const int n = system.dimension();
  Vec s(n + 2);
  s.head(n) = typical_state_scale(system, lo, hi, x0);
  s(n) = 2.0 * std::numbers::pi / (0.5 * (lo + hi));
  s(n + 1) = hi - lo;
  return s;
}

std::string format_seed_id(double lambda, std::size_t orbit, int family, std::size_t crossing) {
  std::ostringstream id;
  id << "l" << lambda << "_o" << orbit << (family > 0 ? "_pos" : "_neg") << "_c" << crossing;
  return id.str();
}

Vec pack_full(const MarginLayout& layout, const ContinuationPoint& pt) {
  Vec v(layout.size());
  v.head(layout.n) = pt.x0;
  v.segment(layout.eps(), layout.m) = pt.eps;
  v(layout.r()) = pt.r;
  v(layout.period()) = pt.period;
  v(layout.lambda()) = pt.lambda;
  return v;
}

}  // namespace

int reference_orientation(const UncertainSystem& system, const MarginOptions& options) {
  if (options.reference_orientation != 0) return options.reference_orientation > 0 ? 1 : -1;
  const auto p = system.realize(options.lambda_lo, Vec::Zero(system.num_uncertain())).p;
  const auto start = solve_forced_orbit(*system.model, *system.metric, p, options.lambda_lo, options.integration);
  if (!start.converged()) throw ContinuationError("reference orientation: no forced orbit: " + start.message);
  const auto sens = solve_initial_sensitivity(start.orbit, *system.model, *system.metric,
                                              system.lambda_direction(), options.integration);
  return sens.orientation;
}

Branch trace_frc(const UncertainSystem& system, const Vec& eps, double lambda_lo, double lambda_hi,
                 const ContinuationSettings& settings, const IntegrationSettings& integration) {
  if (!(lambda_lo < lambda_hi)) throw ContinuationError("trace_frc: empty lambda range");
  const auto p = system.realize(lambda_lo, eps).p;
  const auto start = solve_forced_orbit(*system.model, *system.metric, p, lambda_lo, integration);
  if (!start.converged()) throw ContinuationError("trace_frc: no starting orbit: " + start.message);

  // A metric that does not move along the orbit cannot fix the time shift.
  const Vec row = phase_residual_state_gradient(*system.model, *system.metric, p, start.orbit.x0);
  const Vec flow = system.model->rhs(start.orbit.x0, p);
  const bool stationary = std::abs(row.dot(flow)) <= 1e-10 * row.norm() * flow.norm();
  const bool forcing_phase = stationary && system.model->forcing_phase_state().has_value();

  FrcProblem problem(system, eps, frc_scale(system, lambda_lo, lambda_hi, start.orbit.x0), integration,
                     forcing_phase);
  ContinuationStop stop;
  stop.lower = lambda_lo;
  stop.upper = lambda_hi;
  stop.max_steps = settings.max_steps;
  Branch branch = continue_branch(problem, problem.pack(start.orbit.x0, start.orbit.period, lambda_lo), +1, stop,
                                  settings);
  branch.driver = "frc";
  return branch;
}

std::vector<ContinuationPoint> frc_points_at(const UncertainSystem& system, const Branch& frc, double lambda,
                                             const ContinuationSettings& settings,
                                             const IntegrationSettings& integration) {
  std::vector<ContinuationPoint> out;
  if (frc.points.empty()) return out;
  const double lo = std::min(frc.points.front().lambda, frc.points.back().lambda);
  const double hi = std::max(frc.points.front().lambda, frc.points.back().lambda);
  const auto& first = frc.points.front();
  const Vec scale = frc.scale.size() > 0 ? frc.scale : frc_scale(system, lo, hi > lo ? hi : lo + 1.0, first.x0);
  FrcProblem problem(system, first.eps, scale, integration);
  const int ip = problem.parameter_index();
  for (std::size_t k = 0; k < frc.points.size(); ++k) {
    const auto& a = frc.points[k];
    if (a.lambda == lambda) {
      out.push_back(a);
      continue;
    }
    if (k + 1 == frc.points.size()) break;
    const auto& b = frc.points[k + 1];
    if ((a.lambda - lambda) * (b.lambda - lambda) < 0.0) {
      const double theta = (lambda - a.lambda) / (b.lambda - a.lambda);
      const Vec guess = a.unknowns + theta * (b.unknowns - a.unknowns);
      if (auto hit = solve_at_level(problem, guess, ip, lambda, settings)) out.push_back(problem.point(*hit));
    }
  }
  return out;
}

Vec margin_scale(const UncertainSystem& system, double R, const MarginOptions& options, const Vec& x0_hint) {
  const MarginLayout layout{system.dimension(), system.num_uncertain()};
  const double lo = options.lambda_lo, hi = options.lambda_hi;
  Vec s(layout.size());
  s.head(layout.n) = typical_state_scale(system, lo, hi, x0_hint);
  const double rs = R > 0.0 ? R : 1.0;
  s.segment(layout.eps(), layout.m).setConstant(rs);
  s(layout.r()) = rs;
  s(layout.period()) = 2.0 * std::numbers::pi / (0.5 * (lo + hi));
  s(layout.lambda()) = hi - lo;
  return s;
}

ExpansionResult expand_uncertainty(const UncertainSystem& system, const ContinuationPoint& reference, double R,
                                   const MarginOptions& options) {
  const MarginLayout layout{system.dimension(), system.num_uncertain()};
  ExpansionResult result;
  result.reference = reference;
  result.reference.eps = Vec::Zero(layout.m);
  result.reference.r = 0.0;
  if (R < 0.0) throw ContinuationError("expand_uncertainty: negative uncertainty level");
  if (R == 0.0) {
    result.marginal.push_back(result.reference);
    result.marginal_family.push_back(+1);
    result.gradient = Vec::Zero(layout.m);
    return result;
  }

  const int orientation = reference_orientation(system, options);
  const Vec scale = margin_scale(system, R, options, reference.x0);
  const Vec v_ref = pack_full(layout, result.reference);
  MarginProblem probe(system, MarginMode::fixed_level, v_ref, scale, options.integration,
                      options.continuation.fd_step);
  result.gradient = probe.uncertainty_gradient(v_ref);
  const double gnorm = result.gradient.norm();
  if (!(gnorm >= 1e-12)) {
    std::ostringstream msg;
    msg << "metric locally insensitive to uncertainty: |grad_eps g| = " << gnorm;
    throw ContinuationError(msg.str());
  }

  const double r0 = options.r0_fraction * R;
  std::vector<int> signs{+1};
  if (options.both_signs) signs.push_back(-1);
  for (int sign : signs) {
    Vec v0 = v_ref;
    v0.segment(layout.eps(), layout.m) = (sign * r0 / gnorm) * result.gradient;
    v0(layout.r()) = r0;

    MarginProblem init(system, MarginMode::fixed_level, v0, scale, options.integration, options.continuation.fd_step);
    init.anchor(init.reduce(v0));
    const auto solved = solve_square(init, init.reduce(v0), options.continuation.tolerance, 20);
    if (!solved.converged) {
      std::ostringstream msg;
      msg << "expansion initialization failed (" << solved.failure << "); grad_eps g = ["
          << result.gradient.transpose() << "]";
      throw ContinuationError(msg.str());
    }
    const Vec v1 = init.full(solved.u);

    MarginProblem expansion(system, MarginMode::expansion, v1, scale, options.integration,
                            options.continuation.fd_step);
    expansion.set_reference_orientation(orientation);
    ContinuationStop stop;
    stop.lower = 0.5 * r0;
    stop.upper = options.overshoot * R;
    stop.max_steps = options.continuation.max_steps;
    stop.events = {R};
    Branch branch = continue_branch(expansion, expansion.reduce(v1), +1, stop, options.continuation);
    branch.driver = "expand";
    branch.family = sign;
    for (const auto& ev : branch.events) {
      ContinuationPoint pt = ev;
      pt.tangent.resize(0);
      pt.unknowns.resize(0);
      result.marginal_family.push_back(pt.family != 0 ? pt.family : sign);
      result.marginal.push_back(std::move(pt));
    }
    result.branches.push_back(std::move(branch));
  }
  return result;
}

bool lies_on_branch(ZeroProblem& problem, const Branch& branch, const Vec& u, const ContinuationSettings& settings,
                    double tol) {
  const Vec& s = problem.scale();
  const Vec w = u.cwiseQuotient(s);
  std::vector<std::pair<double, std::size_t>> nearest;
  for (std::size_t k = 0; k < branch.points.size(); ++k) {
    const auto& pt = branch.points[k];
    if (pt.unknowns.size() != u.size() || pt.tangent.size() != u.size()) continue;
    nearest.emplace_back((pt.unknowns.cwiseQuotient(s) - w).norm(), k);
  }
  std::sort(nearest.begin(), nearest.end());
  const std::size_t tries = std::min<std::size_t>(nearest.size(), 3);
  for (std::size_t i = 0; i < tries; ++i) {
    const auto [dist, k] = nearest[i];
    if (dist < tol) return true;
    if (dist > 2.0 * settings.h_max) break;
    const auto& pt = branch.points[k];
    const Vec wk = pt.unknowns.cwiseQuotient(s);
    const double ahead = pt.tangent.dot(w - wk);
    problem.anchor(pt.unknowns);
    const auto outcome = predict_correct(problem, pt.unknowns, pt.tangent, ahead, settings);
    if (outcome.converged && (outcome.u.cwiseQuotient(s) - w).norm() < tol) return true;
  }
  return false;
}

std::vector<Branch> propagate_margins(const UncertainSystem& system, const std::vector<MarginSeed>& seeds, double R,
                                      const MarginOptions& options, std::vector<std::string>* diagnostics) {
  std::vector<Branch> kept;
  if (seeds.empty()) return kept;
  const MarginLayout layout{system.dimension(), system.num_uncertain()};
  const Vec scale = margin_scale(system, R, options, seeds.front().point.x0);

  ContinuationStop stop;
  stop.lower = options.lambda_lo;
  stop.upper = options.lambda_hi;
  stop.max_steps = options.continuation.max_steps;
  stop.detect_closed_loop = true;

  const int orientation = reference_orientation(system, options);
  auto make_problem = [&](const MarginSeed& seed) {
    ContinuationPoint pt = seed.point;
    pt.r = R;
    MarginProblem problem(system, MarginMode::propagation, pack_full(layout, pt), scale, options.integration,
                          options.continuation.fd_step);
    problem.set_reference_orientation(orientation);
    return problem;
  };

  auto trace = [&](const MarginSeed& seed) {
    MarginProblem problem = make_problem(seed);
    const Vec u = problem.reduce(pack_full(layout, seed.point));
    Branch forward = continue_branch(problem, u, +1, stop, options.continuation);
    Branch out;
    if (forward.termination == Termination::closed_loop) {
      out = std::move(forward);
    } else {
      Branch backward = continue_branch(problem, u, -1, stop, options.continuation);
      out.points.reserve(backward.points.size() + forward.points.size());
      for (auto it = backward.points.rbegin(); it + 1 != backward.points.rend(); ++it) {
        out.points.push_back(std::move(*it));
        out.points.back().tangent = -out.points.back().tangent;
      }
      for (auto& pt : forward.points) out.points.push_back(std::move(pt));
      out.arclength = forward.arclength + backward.arclength;
      out.scale = forward.scale;
      if (backward.termination == Termination::closed_loop) {
        out.termination = Termination::closed_loop;
      } else if (forward.termination != Termination::range_exit) {
        out.termination = forward.termination;
      } else {
        out.termination = backward.termination;
      }
    }
    out.driver = "propagate";
    out.family = seed.family;
    out.seed_id = seed.id;
    return out;
  };

  auto is_duplicate = [&](const MarginSeed& seed, std::size_t kept_count) {
    MarginProblem problem = make_problem(seed);
    const Vec u = problem.reduce(pack_full(layout, seed.point));
    for (std::size_t b = 0; b < kept_count; ++b)
      if (lies_on_branch(problem, kept[b], u, options.continuation)) return true;
    return false;
  };

  auto note = [&](const std::string& msg) {
    if (diagnostics) diagnostics->push_back(msg);
  };

  if (options.threads <= 1) {
    for (const auto& seed : seeds) {
      if (is_duplicate(seed, kept.size())) {
        note("seed " + seed.id + " lies on an earlier branch");
        continue;
      }
      try {
        kept.push_back(trace(seed));
      } catch (const ContinuationError& e) {
        note("seed " + seed.id + ": " + e.what());
      }
    }
    return kept;
  }

  // Parallel: trace everything, then apply the same in-order deduplication.
  std::vector<std::optional<Branch>> traced(seeds.size());
  std::vector<std::string> errors(seeds.size());
  parallel_for(seeds.size(), options.threads, [&](std::size_t i) {
    try {
      traced[i] = trace(seeds[i]);
    } catch (const ContinuationError& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (is_duplicate(seeds[i], kept.size())) {
      note("seed " + seeds[i].id + " lies on an earlier branch");
      continue;
    }
    if (!traced[i]) {
      note("seed " + seeds[i].id + ": " + errors[i]);
      continue;
    }
    kept.push_back(std::move(*traced[i]));
  }
  return kept;
}

MarginRun compute_margins(const UncertainSystem& system, double R, const std::vector<double>& seed_lambdas,
                          const MarginOptions& run_options) {
  MarginRun run;
  MarginOptions options = run_options;
  options.reference_orientation = reference_orientation(system, options);
  const Vec zero = Vec::Zero(system.num_uncertain());
  run.reference_frc = trace_frc(system, zero, options.lambda_lo, options.lambda_hi, options.continuation,
                                options.integration);

  struct Task {
    double lambda;
    std::size_t orbit;
    ContinuationPoint reference;
  };
  std::vector<Task> tasks;
  for (double lambda : seed_lambdas) {
    const auto orbits = frc_points_at(system, run.reference_frc, lambda, options.continuation, options.integration);
    if (orbits.empty()) run.diagnostics.push_back("no reference orbit found at seed lambda " + std::to_string(lambda));
    for (std::size_t k = 0; k < orbits.size(); ++k) tasks.push_back({lambda, k, orbits[k]});
  }

  std::vector<std::optional<ExpansionResult>> expansions(tasks.size());
  std::vector<std::string> errors(tasks.size());
  parallel_for(tasks.size(), options.threads, [&](std::size_t i) {
    try {
      expansions[i] = expand_uncertainty(system, tasks[i].reference, R, options);
    } catch (const ContinuationError& e) {
      errors[i] = e.what();
    }
  });

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!expansions[i]) {
      std::ostringstream msg;
      msg << "expansion at lambda " << tasks[i].lambda << " orbit " << tasks[i].orbit << ": " << errors[i];
      run.diagnostics.push_back(msg.str());
      continue;
    }
    std::size_t crossing = 0;
    for (std::size_t k = 0; k < expansions[i]->marginal.size(); ++k) {
      const int family = expansions[i]->marginal_family[k];
      run.seeds.push_back({expansions[i]->marginal[k], family,
                           format_seed_id(tasks[i].lambda, tasks[i].orbit, family, crossing++)});
    }
  }
  // Positive family first, then negative, each in seed order.
  std::stable_sort(run.seeds.begin(), run.seeds.end(),
                   [](const MarginSeed& a, const MarginSeed& b) { return a.family > b.family; });

  run.branches = propagate_margins(system, run.seeds, R, options, &run.diagnostics);
  return run;
}

bool has_negative_isola(const std::vector<Branch>& branches) {
  return std::any_of(branches.begin(), branches.end(), [](const Branch& b) {
    return b.family < 0 && b.termination == Termination::closed_loop;
  });
}

}  // namespace uqcont
