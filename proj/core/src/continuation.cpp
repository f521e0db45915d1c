#include <cmath>
#include <limits>
#include <sstream>

#include "uqcont/continuation.hpp"

namespace uqcont {

std::string_view to_string(Termination t) noexcept {
  switch (t) {
    case Termination::range_exit: return "range-exit";
    case Termination::max_steps: return "max-steps";
    case Termination::step_underflow: return "step-underflow";
    case Termination::closed_loop: return "closed-loop";
    case Termination::degenerate_tangent: return "degenerate-tangent";
  }
  return "unknown";
}

namespace {

constexpr double kSingularRcond = 1e-14;

Mat scaled(const Mat& jacobian, const Vec& scale) { return jacobian * scale.asDiagonal(); }

// Evaluations may throw on integration blow-up or near-singular sensitivity
// systems; the engine treats both as a failed attempt.
std::optional<ZeroProblem::Evaluation> try_evaluate(const ZeroProblem& problem, const Vec& u, bool with_jacobian,
                                                    const StepMesh* replay, std::string* failure = nullptr) {
  try {
    return problem.evaluate(u, with_jacobian, replay);
  } catch (const std::exception& e) {
    if (failure) *failure = e.what();
    return std::nullopt;
  }
}

}  // namespace

std::optional<Vec> compute_tangent(const Mat& scaled_jacobian, const Vec* previous, int parameter_index) {
  const auto n = scaled_jacobian.cols();
  if (scaled_jacobian.rows() != n - 1) throw ContinuationError("tangent needs one more unknown than equations");
  Eigen::Index fixed = parameter_index;
  if (previous) previous->cwiseAbs().maxCoeff(&fixed);

  Mat square(n, n);
  square.topRows(n - 1) = scaled_jacobian;
  square.row(n - 1).setZero();
  square(n - 1, fixed) = 1.0;
  const Eigen::PartialPivLU<Mat> lu(square);
  if (!(lu.rcond() > kSingularRcond)) return std::nullopt;
  Vec rhs = Vec::Zero(n);
  rhs(n - 1) = 1.0;
  Vec t = lu.solve(rhs);
  const double norm = t.norm();
  if (!std::isfinite(norm) || norm == 0.0) return std::nullopt;
  t /= norm;
  if (previous && t.dot(*previous) < 0.0) t = -t;
  return t;
}

CorrectorOutcome predict_correct(const ZeroProblem& problem, const Vec& u, const Vec& tangent, double h,
                                 const ContinuationSettings& settings, const Mat* jacobian) {
  const Vec& s = problem.scale();
  const int n = problem.num_unknowns();
  const Vec w0 = u.cwiseQuotient(s);
  const Vec w_pred = w0 + h * tangent;

  CorrectorOutcome out;
  Vec w = w_pred;
  StepMesh mesh;
  auto eval = try_evaluate(problem, Vec(w.cwiseProduct(s)), false, nullptr, &out.failure);
  if (!eval) return out;
  mesh = eval->mesh;

  Mat chord;
  if (jacobian) {
    chord = scaled(*jacobian, s);
  } else {
    auto full = try_evaluate(problem, Vec(w0.cwiseProduct(s)), true, nullptr, &out.failure);
    if (!full) return out;
    chord = scaled(full->jacobian, s);
  }
  auto factor = [&](const Mat& j) {
    Mat a(n, n);
    a.topRows(n - 1) = j;
    a.row(n - 1) = tangent.transpose();
    return Eigen::PartialPivLU<Mat>(a);
  };
  auto lu = factor(chord);

  Vec residual(n);
  residual.head(n - 1) = eval->residual;
  residual(n - 1) = tangent.dot(w - w_pred);
  double norm = residual.norm();
  double prev_norm = std::numeric_limits<double>::infinity();
  bool fresh = false;

  for (int it = 0;; ++it) {
    out.iterations = it;
    out.residual_norm = norm;
    if (norm < settings.tolerance) {
      out.converged = true;
      out.u = w.cwiseProduct(s);
      out.correction = (w - w_pred).norm();
      return out;
    }
    if (it >= settings.max_corrector_iterations || !std::isfinite(norm)) break;

    if (it > 0 && norm > settings.jacobian_refresh_ratio * prev_norm && !fresh) {
      auto full = try_evaluate(problem, Vec(w.cwiseProduct(s)), true, &mesh, &out.failure);
      if (!full) return out;
      lu = factor(scaled(full->jacobian, s));
      fresh = true;
    } else {
      fresh = false;
    }
    if (!(lu.rcond() > kSingularRcond)) {
      out.failure = "singular corrector matrix";
      return out;
    }
    w -= lu.solve(residual);
    auto next = try_evaluate(problem, Vec(w.cwiseProduct(s)), false, &mesh, &out.failure);
    if (!next) return out;
    residual.head(n - 1) = next->residual;
    residual(n - 1) = tangent.dot(w - w_pred);
    prev_norm = norm;
    norm = residual.norm();
  }
  out.u = w.cwiseProduct(s);
  if (out.failure.empty()) {
    std::ostringstream msg;
    msg << "corrector stalled at residual " << norm;
    out.failure = msg.str();
  }
  return out;
}

std::optional<Vec> solve_at_level(const ZeroProblem& problem, const Vec& guess, int index, double value,
                                  const ContinuationSettings& settings) {
  const int n = problem.num_unknowns();
  const Vec& s = problem.scale();
  Vec u = guess;
  u(index) = value;
  StepMesh mesh;
  bool have_mesh = false;
  for (int it = 0; it <= 2 * settings.max_corrector_iterations; ++it) {
    auto eval = try_evaluate(problem, u, true, have_mesh ? &mesh : nullptr);
    if (!eval) return std::nullopt;
    if (!have_mesh) {
      mesh = eval->mesh;
      have_mesh = true;
    }
    Vec residual(n);
    residual.head(n - 1) = eval->residual;
    residual(n - 1) = (u(index) - value) / s(index);
    if (residual.norm() < settings.tolerance) return u;
    Mat a(n, n);
    a.topRows(n - 1) = scaled(eval->jacobian, s);
    a.row(n - 1).setZero();
    a(n - 1, index) = 1.0;
    const Eigen::PartialPivLU<Mat> lu(a);
    if (!(lu.rcond() > kSingularRcond)) return std::nullopt;
    u -= Vec(lu.solve(residual)).cwiseProduct(s);
  }
  return std::nullopt;
}

CorrectorOutcome solve_square(const ZeroProblem& problem, const Vec& guess, double tolerance, int max_iterations) {
  CorrectorOutcome out;
  if (problem.num_equations() != problem.num_unknowns()) throw ContinuationError("solve_square needs a square problem");
  Vec u = guess;
  for (int it = 0;; ++it) {
    auto eval = try_evaluate(problem, u, true, nullptr, &out.failure);
    if (!eval) return out;
    out.iterations = it;
    out.residual_norm = eval->residual.norm();
    out.u = u;
    if (out.residual_norm < tolerance) {
      out.converged = true;
      return out;
    }
    if (it >= max_iterations) break;
    const Eigen::PartialPivLU<Mat> lu(eval->jacobian);
    if (!(lu.rcond() > kSingularRcond)) {
      out.failure = "singular Newton matrix";
      return out;
    }
    u -= lu.solve(eval->residual);
  }
  std::ostringstream msg;
  msg << "Newton stalled at residual " << out.residual_norm;
  out.failure = msg.str();
  return out;
}

Branch continue_branch(ZeroProblem& problem, const Vec& u_start, int direction, const ContinuationStop& stop,
                       const ContinuationSettings& settings) {
  const Vec& s = problem.scale();
  const int ip = problem.parameter_index();
  Branch branch;
  branch.scale = s;

  problem.anchor(u_start);
  std::string failure;
  auto start = try_evaluate(problem, u_start, true, nullptr, &failure);
  if (!start) throw ContinuationError("cannot evaluate the starting point: " + failure);
  Mat jac = start->jacobian;
  auto t0 = compute_tangent(scaled(jac, s), nullptr, ip);
  ContinuationPoint first = problem.point(u_start);
  if (!t0) {
    branch.points.push_back(std::move(first));
    branch.termination = Termination::degenerate_tangent;
    return branch;
  }
  Vec t = *t0;
  if ((direction < 0) != (t(ip) < 0)) t = -t;
  first.tangent = t;
  branch.points.push_back(std::move(first));

  const Vec w_seed = u_start.cwiseQuotient(s);
  Vec u = u_start;
  double h = std::clamp(settings.h_init, settings.h_min, settings.h_max);
  const double loop_arclength = settings.closed_loop_min_arclength * settings.h_init;

  for (int step = 0; step < stop.max_steps; ++step) {
    const Vec w = u.cwiseQuotient(s);
    if (stop.detect_closed_loop && branch.arclength > loop_arclength) {
      const Vec to_seed = w_seed - w;
      const double ahead = t.dot(to_seed);
      if (ahead > 0.0 && ahead <= h && (to_seed - ahead * t).norm() < h) {
        h = ahead;  // land on the hyperplane through the seed
      }
    }

    bool accepted = false;
    CorrectorOutcome outcome;
    Mat next_jac;
    Vec next_t;
    for (int attempt = 0; attempt <= settings.max_halvings && h >= settings.h_min; ++attempt) {
      outcome = predict_correct(problem, u, t, h, settings, &jac);
      if (outcome.converged && outcome.correction <= h) {
        problem.anchor(outcome.u);
        auto eval = try_evaluate(problem, outcome.u, true, nullptr);
        if (eval) {
          auto tn = compute_tangent(scaled(eval->jacobian, s), &t, ip);
          if (!tn) {
            branch.points.push_back(problem.point(outcome.u));
            branch.termination = Termination::degenerate_tangent;
            return branch;
          }
          if (tn->dot(t) >= settings.min_tangent_dot) {
            next_jac = std::move(eval->jacobian);
            next_t = *tn;
            accepted = true;
            break;
          }
        }
        problem.anchor(u);
      }
      h *= 0.5;
    }
    if (!accepted) {
      branch.termination = Termination::step_underflow;
      return branch;
    }

    const Vec u_prev = u;
    u = outcome.u;
    jac = std::move(next_jac);
    t = next_t;
    branch.arclength += h;

    const double a = u_prev(ip), b = u(ip);
    for (double level : stop.events) {
      if ((a - level) * (b - level) < 0.0 || (b == level && a != level)) {
        const double theta = (level - a) / (b - a);
        const Vec guess = u_prev + theta * (u - u_prev);
        if (auto hit = solve_at_level(problem, guess, ip, level, settings)) {
          ContinuationPoint ev = problem.point(*hit);
          ev.tangent = t;
          branch.events.push_back(std::move(ev));
        }
      }
    }

    const bool below = b < stop.lower, above = b > stop.upper;
    if (below || above) {
      const double bound = below ? stop.lower : stop.upper;
      const double theta = (bound - a) / (b - a);
      const Vec guess = u_prev + theta * (u - u_prev);
      ContinuationPoint last = problem.point(u);
      if (auto hit = solve_at_level(problem, guess, ip, bound, settings)) last = problem.point(*hit);
      last.tangent = t;
      branch.points.push_back(std::move(last));
      branch.termination = Termination::range_exit;
      return branch;
    }

    ContinuationPoint pt = problem.point(u);
    pt.tangent = t;
    branch.points.push_back(std::move(pt));

    if (stop.detect_closed_loop && branch.arclength > loop_arclength &&
        (u.cwiseQuotient(s) - w_seed).norm() < settings.closed_loop_tolerance) {
      branch.termination = Termination::closed_loop;
      return branch;
    }

    if (outcome.iterations <= settings.easy_iterations) h = std::min(h * settings.growth, settings.h_max);
    h = std::max(h, settings.h_min);
  }
  branch.termination = Termination::max_steps;
  return branch;
}

double locate_critical_level(const std::function<bool(double)>& predicate, double lo, double hi, double tol) {
  if (!(lo < hi)) throw std::invalid_argument("critical-level bracket must satisfy lo < hi");
  if (tol >= hi - lo) return 0.5 * (lo + hi);
  if (predicate(lo)) throw std::invalid_argument("predicate already holds at the lower end of the bracket");
  if (!predicate(hi)) throw std::invalid_argument("predicate does not hold at the upper end of the bracket");
  while (hi - lo >= tol) {
    const double mid = 0.5 * (lo + hi);
    (predicate(mid) ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace uqcont
