#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "uqcont/continuation.hpp"

namespace uqcont {

namespace {

struct Segment {
  Vec w0, w1, d0, d1;  // scaled end points and end derivatives (d/dsigma)
  bool cubic = false;

  [[nodiscard]] Vec at(double sigma) const {
    if (!cubic) return (1.0 - sigma) * w0 + sigma * w1;
    const double s2 = sigma * sigma, s3 = s2 * sigma;
    return (2 * s3 - 3 * s2 + 1) * w0 + (s3 - 2 * s2 + sigma) * d0 + (-2 * s3 + 3 * s2) * w1 + (s3 - s2) * d1;
  }
};

Segment make_segment(const Branch& branch, std::size_t i) {
  const auto& a = branch.points[i];
  const auto& b = branch.points[i + 1];
  const Vec& s = branch.scale;
  Segment seg;
  seg.w0 = a.unknowns.cwiseQuotient(s);
  seg.w1 = b.unknowns.cwiseQuotient(s);
  const double chord = (seg.w1 - seg.w0).norm();
  seg.cubic = a.tangent.size() == seg.w0.size() && b.tangent.size() == seg.w0.size() && chord > 0.0;
  if (seg.cubic) {
    seg.d0 = chord * a.tangent;
    seg.d1 = chord * b.tangent;
  }
  return seg;
}

bool usable(const Branch& branch) {
  if (branch.points.size() < 2 || branch.scale.size() == 0) return false;
  return std::all_of(branch.points.begin(), branch.points.end(),
                     [&](const ContinuationPoint& p) { return p.unknowns.size() == branch.scale.size(); });
}

}  // namespace

std::vector<Vec> branch_unknowns_at(const Branch& branch, double lambda) {
  std::vector<Vec> out;
  if (!usable(branch)) return out;
  const Eigen::Index last = branch.scale.size() - 1;
  const double target = lambda / branch.scale(last);
  constexpr int kSubdivisions = 8;

  for (std::size_t i = 0; i + 1 < branch.points.size(); ++i) {
    const Segment seg = make_segment(branch, i);
    const bool final_segment = i + 2 == branch.points.size();
    auto f = [&](double sigma) { return seg.at(sigma)(last) - target; };

    std::array<double, kSubdivisions + 1> grid{};
    std::array<double, kSubdivisions + 1> fv{};
    for (int k = 0; k <= kSubdivisions; ++k) {
      grid[static_cast<std::size_t>(k)] = static_cast<double>(k) / kSubdivisions;
      fv[static_cast<std::size_t>(k)] = f(grid[static_cast<std::size_t>(k)]);
    }
    for (int k = 0; k < kSubdivisions; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      double lo = grid[ku], hi = grid[ku + 1], flo = fv[ku];
      const double fhi = fv[ku + 1];
      // Half-open intervals so a node shared by two segments counts once.
      const bool at_end = final_segment && k + 1 == kSubdivisions;
      if (flo == 0.0) {
        hi = lo;
      } else if (at_end && fhi == 0.0) {
        lo = hi;
      } else if (flo * fhi < 0.0) {
        for (int it = 0; it < 60 && hi - lo > 1e-15; ++it) {
          const double mid = 0.5 * (lo + hi);
          const double fm = f(mid);
          if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
          } else {
            hi = mid;
          }
        }
      } else {
        continue;
      }
      Vec u = seg.at(0.5 * (lo + hi)).cwiseProduct(branch.scale);
      u(last) = lambda;
      out.push_back(std::move(u));
    }
  }
  return out;
}

namespace {

// eps carried by interpolated unknowns `u`: propagation branches hold
// [x0; eps; T; lambda] (r frozen), expansion branches the full layout, FRC
// branches no eps at all.
Vec branch_eps(const UncertainSystem& system, const Branch& branch, const Vec& u) {
  const MarginLayout layout{system.dimension(), system.num_uncertain()};
  if (u.size() >= layout.size() - 1) return u.segment(layout.eps(), layout.m);
  return branch.points.front().eps;
}

}  // namespace

std::vector<double> branch_values_at(const UncertainSystem& system, const Branch& branch, double lambda) {
  std::vector<double> values;
  const int n = system.dimension();
  for (const Vec& u : branch_unknowns_at(branch, lambda))
    values.push_back(system.metric->value(u.head(n), system.realize(lambda, branch_eps(system, branch, u)).p));
  return values;
}

std::vector<double> branch_orbit_values_at(const UncertainSystem& system, const Branch& branch, double lambda,
                                           const IntegrationSettings& integration) {
  std::vector<double> values;
  const int n = system.dimension();
  const MarginLayout layout{n, system.num_uncertain()};
  for (const Vec& u : branch_unknowns_at(branch, lambda)) {
    Vec eps = branch_eps(system, branch, u);
    double period = u(u.size() - 2);
    if (u.size() >= layout.size() - 1) {
      const double r = u.size() == layout.size() ? u(layout.r()) : branch.points.front().r;
      const double norm = eps.norm();
      if (norm > 0.0) eps *= r / norm;
    }
    const Vec p = system.realize(lambda, eps).p;
    const auto solved = solve_periodic_orbit(*system.model, *system.metric, p, u.head(n), period, integration);
    values.push_back(solved.converged() ? solved.orbit.metric_value : system.metric->value(u.head(n), p));
  }
  return values;
}

std::vector<double> branch_folds(const Branch& branch) {
  std::vector<double> folds;
  for (std::size_t i = 1; i + 1 < branch.points.size(); ++i) {
    const double a = branch.points[i].lambda - branch.points[i - 1].lambda;
    const double b = branch.points[i + 1].lambda - branch.points[i].lambda;
    if (a * b < 0.0) folds.push_back(branch.points[i].lambda);
  }
  return folds;
}

double branch_separation(const Branch& a, const Branch& b) {
  double best = std::numeric_limits<double>::infinity();
  if (a.scale.size() == 0 || b.scale.size() != a.scale.size()) return best;
  for (const auto& pa : a.points) {
    if (pa.unknowns.size() != a.scale.size()) continue;
    const Vec w = pa.unknowns.cwiseQuotient(a.scale);
    for (std::size_t j = 0; j + 1 < b.points.size(); ++j) {
      const Vec q0 = b.points[j].unknowns.cwiseQuotient(b.scale);
      const Vec q1 = b.points[j + 1].unknowns.cwiseQuotient(b.scale);
      const Vec d = q1 - q0;
      const double len2 = d.squaredNorm();
      const double t = len2 > 0.0 ? std::clamp((w - q0).dot(d) / len2, 0.0, 1.0) : 0.0;
      best = std::min(best, (w - q0 - t * d).norm());
    }
  }
  return best;
}

}  // namespace uqcont
