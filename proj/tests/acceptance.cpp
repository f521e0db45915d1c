// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uqcont/harness/commands.hpp"

namespace {

using namespace uqcont;
using namespace uqcont::harness;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

RunConfig preset_config(const std::string& name) { return parse_config(nlohmann::json{{"preset", name}}); }

double max_abs_metric(const Branch& b) {
  double g = 0.0;
  for (const auto& p : b.points) g = std::max(g, std::abs(p.metric_value));
  return g;
}

// ---------------------------------------------------------------------------

Outcome natural_frequencies() {
  const auto [a1, a2] = linear_natural_frequencies(find_preset("two_mode_4a").parameters);
  const auto [b1, b2] = linear_natural_frequencies(find_preset("two_mode_4b").parameters);
  const bool ok = std::abs(a1 - 1.0) <= 1e-9 && std::abs(a2 - std::sqrt(3.0)) <= 1e-9 &&
                  std::abs(b1 - 0.936) <= 5e-4 && std::abs(b2 - 1.150) <= 5e-4;
  return {ok, fmt("4a (%.10f, %.10f), 4b (%.5f, %.5f)", a1, a2, b1, b2)};
}

Outcome sensitivity_oracle() {
  const RunConfig cfg = preset_config("duffing_s2");
  const UncertainSystem sys = build_system(cfg);
  IntegrationSettings tight;
  tight.rel_tol = 1e-12;
  tight.abs_tol = 1e-14;
  NewtonSettings newton;
  newton.tolerance = 1e-12;
  const int m = sys.num_uncertain();
  const double h = 1e-4;

  double worst_s = 0.0, worst_g = 0.0;
  for (double omega : {0.8, 2.0}) {
    const auto real = sys.realize(omega, Vec::Zero(m));
    const auto base = solve_forced_orbit(*sys.model, *sys.metric, real.p, omega, tight, newton);
    if (!base.converged()) return {false, fmt("no orbit at omega %.2f", omega)};
    const auto sens = solve_initial_sensitivity(base.orbit, *sys.model, *sys.metric, real.dp_deps, tight);
    const Vec grad = metric_uncertainty_gradient(*sys.metric, base.orbit.x0, real.p, sens.S0, real.dp_deps);

    Mat s_fd(sens.S0.rows(), m);
    Vec g_fd(m);
    for (int j = 0; j < m; ++j) {
      std::array<PeriodicOrbit, 2> side;
      for (int k = 0; k < 2; ++k) {
        Vec eps = Vec::Zero(m);
        eps(j) = k == 0 ? h : -h;
        const Vec p = sys.realize(omega, eps).p;
        const auto res = solve_periodic_orbit(*sys.model, *sys.metric, p, base.orbit.x0, base.orbit.period, tight, newton);
        if (!res.converged()) return {false, fmt("re-solve failed at omega %.2f", omega)};
        side[static_cast<std::size_t>(k)] = res.orbit;
      }
      s_fd.col(j) = (side[0].x0 - side[1].x0) / (2.0 * h);
      g_fd(j) = (side[0].metric_value - side[1].metric_value) / (2.0 * h);
    }
    worst_s = std::max(worst_s, (sens.S0 - s_fd).norm() / sens.S0.norm());
    worst_g = std::max(worst_g, (grad - g_fd).norm() / grad.norm());
  }
  return {worst_s <= 1e-5 && worst_g <= 1e-5,
          fmt("max relative error S0 %.2e, grad_eps g %.2e (limit 1e-5)", worst_s, worst_g)};
}

// Damping is linear and the forcing pair sits on the unit circle, so
// int tr A dt = T (2 - 4 |s|^2 - sum of damping/mass) is known exactly.
double trace_rate(const std::string& model, const ParameterSet& p) {
  if (model == "duffing") return -p["c"] / p["m"] - 2.0;
  return -(p["c1"] + p["c2"]) / p["m1"] - (p["c2"] + p["c3"]) / p["m2"] - 2.0;
}

Outcome floquet_liouville() {
  const std::vector<std::pair<std::string, std::vector<double>>> cases{
      {"two_mode_4a", {0.6, 0.9, 1.3, 2.0}}, {"two_mode_4b", {0.6, 0.9, 1.3, 2.0}},
      {"two_mode_4c", {0.6, 0.9, 1.3, 2.0}}, {"two_mode_4d", {0.6, 0.9, 1.3, 2.0}},
      {"duffing_s2", {0.5, 0.9, 1.7, 2.0}}};
  int orbits = 0;
  double worst_f = 0.0, worst_det = 0.0, worst_trace = 0.0;
  for (const auto& [name, omegas] : cases) {
    const RunConfig cfg = preset_config(name);
    const UncertainSystem sys = build_system(cfg);
    const int n = sys.dimension();
    for (double omega : omegas) {
      const auto real = sys.realize(omega, Vec::Zero(sys.num_uncertain()));
      const auto res = solve_forced_orbit(*sys.model, *sys.metric, real.p, omega, cfg.integration);
      if (!res.converged()) return {false, fmt("%s: no orbit at omega %.2f", name.c_str(), omega)};
      ++orbits;
      const auto& o = res.orbit;
      const Vec f = sys.model->rhs(o.x0, real.p);
      worst_f = std::max(worst_f, ((o.monodromy - Mat::Identity(n, n)) * f).norm() / f.norm());

      const auto aug = integrate_augmented(*sys.model, real.p, o.x0, o.period, Mat::Zero(sys.num_parameters(), 0),
                                           cfg.integration);
      ParameterSet ps = sys.reference.with_lambda(omega);
      ps.values = real.p;
      const double exact = o.period * trace_rate(cfg.model, ps);
      const double det = o.monodromy.determinant();
      worst_det = std::max(worst_det, std::abs(det / std::exp(exact) - 1.0));
      worst_trace = std::max(worst_trace, std::abs(aug.trace_integral - exact) / std::abs(exact));
    }
  }
  const bool ok = orbits == 20 && worst_f <= 1e-6 && worst_det <= 1e-6;
  return {ok, fmt("%d orbits; max |(H-I)F|/|F| %.2e, max |det H / exp(int tr A) - 1| %.2e, trace integral rel. err %.2e",
                  orbits, worst_f, worst_det, worst_trace)};
}

Outcome duffing_multivalued() {
  RunConfig cfg = preset_config("duffing_s2");
  const UncertainSystem sys = build_system(cfg);
  const Branch frc = trace_frc(sys, Vec::Zero(sys.num_uncertain()), 0.3, 2.0, cfg.continuation, cfg.integration);
  std::size_t most = 0;
  double where = 0.0;
  for (double w = 0.3; w <= 2.0; w += 0.005) {
    const std::size_t k = branch_unknowns_at(frc, w).size();
    if (k > most) {
      most = k;
      where = w;
    }
  }
  const auto folds = branch_folds(frc);
  bool bracket = folds.size() == 2;
  if (bracket) {
    const double lo = std::min(folds[0], folds[1]), hi = std::max(folds[0], folds[1]);
    bracket = lo < 1.4 && hi > 1.4 && 1.4 - lo <= 0.15 && hi - 1.4 <= 0.15;
  }
  std::string fold_text;
  for (double f : folds) fold_text += fmt(" %.4f", f);
  return {frc.termination == Termination::range_exit && most >= 3 && bracket,
          fmt("%zu coexisting orbits at omega %.3f; folds at%s", most, where, fold_text.c_str())};
}

Outcome envelope_soundness() {
  struct Case {
    std::string preset;
    double R;
  };
  const std::vector<Case> cases{{"two_mode_4a", 0.1}, {"two_mode_4b", 0.1}, {"two_mode_4c", 0.1},
                                {"two_mode_4d", 0.1}, {"two_mode_4d", 0.07}};
  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    const RunConfig cfg = preset_config(c.preset);
    const UncertainSystem sys = build_system(cfg);
    const auto run = validate_margins(sys, cfg, c.R);
    const auto& rep = run.report;
    ok = ok && rep.passed();
    detail += fmt("%s%s@%.2f viol %.1e slack %.1e%s", detail.empty() ? "" : "; ", c.preset.substr(9).c_str(), c.R,
                  rep.max_violation, rep.max_slack, rep.passed() ? "" : " FAILED");
    if (rep.failures > 0) detail += fmt(" (%d/%d samples failed)", rep.failures, rep.samples);
    if (rep.uncovered_bins > 0) detail += fmt(" (%d uncovered bins)", rep.uncovered_bins);
  }
  return {ok, detail};
}

Outcome nested_margins() {
  const RunConfig cfg = preset_config("two_mode_4b");
  const UncertainSystem sys = build_system(cfg);
  const MarginOptions opt = margin_options(cfg);
  constexpr int kSamples = 200;
  std::vector<double> lambdas(kSamples);
  for (int i = 0; i < kSamples; ++i)
    lambdas[static_cast<std::size_t>(i)] = cfg.lambda_lo + (i + 0.5) * (cfg.lambda_hi - cfg.lambda_lo) / kSamples;

  std::vector<double> levels = cfg.R_list;
  std::sort(levels.begin(), levels.end());
  std::vector<std::vector<double>> upper, lower;
  double g_scale = 0.0;
  for (double R : levels) {
    const auto run = compute_margins(sys, R, cfg.seed_omegas, opt);
    g_scale = std::max(g_scale, max_abs_metric(run.reference_frc));
    std::vector<double> up(kSamples), lo(kSamples);
    for (int i = 0; i < kSamples; ++i) {
      std::vector<double> v;
      for (const auto& b : run.branches)
        for (double g : branch_orbit_values_at(sys, b, lambdas[static_cast<std::size_t>(i)], cfg.integration))
          v.push_back(g);
      if (v.empty()) return {false, fmt("R = %.3f: no margin at omega %.4f", R, lambdas[static_cast<std::size_t>(i)])};
      up[static_cast<std::size_t>(i)] = *std::max_element(v.begin(), v.end());
      lo[static_cast<std::size_t>(i)] = *std::min_element(v.begin(), v.end());
    }
    upper.push_back(std::move(up));
    lower.push_back(std::move(lo));
  }

  const double floor = 0.01 * g_scale;
  int violations = 0;
  double worst = 0.0;
  for (std::size_t k = 0; k + 1 < levels.size(); ++k)
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      const double up = (upper[k][i] - upper[k + 1][i]) / std::max(std::abs(upper[k + 1][i]), floor);
      const double down = (lower[k + 1][i] - lower[k][i]) / std::max(std::abs(lower[k + 1][i]), floor);
      const double v = std::max(up, down);
      worst = std::max(worst, v);
      if (v > 1e-6) ++violations;
    }
  return {levels.size() == 4 && violations == 0,
          fmt("%zu levels x %d omegas; %d violations, worst relative overlap %.2e", levels.size(), kSamples, violations,
              worst)};
}

Outcome isola_emergence() {
  RunConfig cfg = preset_config("two_mode_4d");
  const UncertainSystem sys = build_system(cfg);
  const MarginOptions opt = margin_options(cfg);

  const auto low = compute_margins(sys, 0.07, cfg.seed_omegas, opt);
  const bool none_low = std::none_of(low.branches.begin(), low.branches.end(),
                                     [](const Branch& b) { return b.termination == Termination::closed_loop; });

  const auto high = compute_margins(sys, 0.10, cfg.seed_omegas, opt);
  int isolas = 0;
  double separation = std::numeric_limits<double>::infinity();
  std::string extent;
  for (const auto& loop : high.branches) {
    if (loop.family >= 0 || loop.termination != Termination::closed_loop) continue;
    double sep = std::numeric_limits<double>::infinity();
    for (const auto& other : high.branches)
      if (other.termination != Termination::closed_loop) sep = std::min(sep, branch_separation(loop, other));
    if (sep <= 1e-3) continue;
    ++isolas;
    separation = std::min(separation, sep);
    const auto [lo, hi] = std::minmax_element(loop.points.begin(), loop.points.end(),
                                              [](const auto& a, const auto& b) { return a.lambda < b.lambda; });
    extent += fmt(" [%.3f, %.3f]", lo->lambda, hi->lambda);
  }

  cfg.R_list.clear();
  cfg.isola_scan.levels.clear();
  cfg.isola_scan.lo = 0.07;
  cfg.isola_scan.hi = 0.10;
  cfg.isola_scan.tol = 1e-3;
  const auto scan = scan_isola(sys, cfg);
  const bool crit_ok = std::abs(scan.critical - 0.07145) <= 0.0015;
  return {none_low && isolas >= 1 && crit_ok,
          fmt("R=0.07 closed loops: %s; R=0.10 detached negative loops: %d%s (separation %.2e); R_crit %.5f after %d "
              "bisection runs",
              none_low ? "none" : "present", isolas, extent.c_str(), separation, scan.critical, scan.evaluations)};
}

Outcome dominance_switch() {
  const RunConfig cfg = preset_config("two_mode_4a");
  const UncertainSystem sys = build_system(cfg);
  const MarginOptions opt = margin_options(cfg);
  const int m = sys.num_uncertain();
  const Branch frc = trace_frc(sys, Vec::Zero(m), cfg.lambda_lo, cfg.lambda_hi, cfg.continuation, cfg.integration);

  // First resonance peak: largest |g| below the midpoint of the two modes.
  const auto [w1, w2] = linear_natural_frequencies(sys.reference);
  const ContinuationPoint* peak = nullptr;
  for (const auto& p : frc.points)
    if (p.lambda < 0.5 * (w1 + w2) && (!peak || std::abs(p.metric_value) > std::abs(peak->metric_value))) peak = &p;
  if (!peak) return {false, "no reference orbit below the second mode"};

  // At ω=0.6 every margin must be k1-dominated. At the peak only the
  // positive family is checked: the negative margin there is the
  // stiffness-driven swallowtail.
  struct Dominance {
    bool k1_all = true;
    bool f1_positive = true;
    std::string text;
  };
  auto dominance = [&](const ContinuationPoint& ref) {
    const auto res = expand_uncertainty(sys, ref, cfg.R, opt);
    Dominance d;
    d.k1_all = d.f1_positive = !res.marginal.empty();
    for (std::size_t k = 0; k < res.marginal.size(); ++k) {
      const auto& q = res.marginal[k];
      const bool k1 = std::abs(q.eps(0)) > std::abs(q.eps(1));
      d.k1_all = d.k1_all && k1;
      if (res.marginal_family[k] > 0) d.f1_positive = d.f1_positive && !k1;
      d.text += fmt(" %s(%+.4f, %+.4f)", res.marginal_family[k] > 0 ? "+" : "-", q.eps(0), q.eps(1));
    }
    return d;
  };

  const auto low_orbits = frc_points_at(sys, frc, 0.6, cfg.continuation, cfg.integration);
  if (low_orbits.size() != 1) return {false, fmt("%zu reference orbits at omega 0.6", low_orbits.size())};
  const Dominance low = dominance(low_orbits.front());
  ContinuationPoint peak_point = *peak;
  peak_point.eps = Vec::Zero(m);
  const Dominance top = dominance(peak_point);
  return {low.k1_all && top.f1_positive, fmt("(eps_k1, eps_F1) by family at 0.6:%s; at peak %.4f:%s",
                                             low.text.c_str(), peak->lambda, top.text.c_str())};
}

Outcome determinism(const fs::path& work) {
  RunConfig cfg = preset_config("two_mode_4a");
  std::vector<fs::path> dirs;
  std::ostringstream log;
  for (int threads : {1, 2}) {
    cfg.output_dir = (work / ("run" + std::to_string(threads))).string();
    cfg.threads = threads;
    fs::remove_all(cfg.output_dir);
    const auto res = run_command("margins", cfg, log);
    if (res.exit_code != kSuccess) return {false, fmt("margins exited with %d", res.exit_code)};
    dirs.push_back(res.run_dir);
  }
  auto csv_files = [](const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() != ".csv") continue;
      std::ifstream in(e.path(), std::ios::binary);
      std::ostringstream text;
      text << in.rdbuf();
      files[e.path().filename().string()] = text.str();
    }
    return files;
  };
  const auto a = csv_files(dirs[0]), b = csv_files(dirs[1]);
  std::size_t bytes = 0;
  for (const auto& [name, text] : a) bytes += text.size();
  return {!a.empty() && a == b, fmt("%zu CSV files, %zu bytes, threads 1 vs 2: %s", a.size(), bytes,
                                    a == b ? "identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "uqcont_acceptance").string();
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 9));
  app.add_option("--work-dir", work, "scratch directory for command outputs");
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "natural frequencies", 1.0, natural_frequencies},
      {2, "sensitivity vs finite differences", 30.0, sensitivity_oracle},
      {3, "Floquet multiplier and Liouville identity", 120.0, floquet_liouville},
      {4, "Duffing multi-valuedness", 60.0, duffing_multivalued},
      {5, "envelope soundness", 1800.0, envelope_soundness},
      {6, "nested margins", 1200.0, nested_margins},
      {7, "isola emergence", 1800.0, isola_emergence},
      {8, "dominance switch", 300.0, dominance_switch},
      {9, "determinism", 600.0, [&] { return determinism(work); }},
  };

  fs::create_directories(work);
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = out.pass && in_time;
    if (!pass) ++failed;
    std::printf("%s %d %s: %s [%.1f s of %.0f s%s]\n", pass ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str(), secs,
                c.budget_s, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
