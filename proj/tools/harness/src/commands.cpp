#include "uqcont/harness/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <ostream>

#include "uqcont/harness/records.hpp"

namespace uqcont::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  const RunConfig& config;
  UncertainSystem system;
  fs::path dir;
  json branches = json::array();
  std::vector<std::string> diagnostics;
  json report = json::object();

  [[nodiscard]] int n() const { return system.dimension(); }
  [[nodiscard]] int m() const { return system.num_uncertain(); }

  void write(const Branch& b, const std::string& id, int family) {
    const std::string file = "branch_" + family_tag(family) + "_" + id + ".csv";
    write_branch_csv(dir / file, b, id, n(), m());
    const auto& first = b.points.front();
    branches.push_back({{"file", file},
                        {"id", id},
                        {"family", family},
                        {"driver", b.driver},
                        {"seed", b.seed_id},
                        {"termination", std::string(to_string(b.termination))},
                        {"points", b.points.size()},
                        {"lambda_start", first.lambda},
                        {"lambda_end", b.points.back().lambda}});
  }

  void write_margins(const std::vector<Branch>& list, const std::string& prefix = "") {
    for (std::size_t i = 0; i < list.size(); ++i) write(list[i], prefix + std::to_string(i), list[i].family);
  }
};

std::string fmt(double v, const char* format = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

Branch reference_curve(const Run& run) {
  return trace_frc(run.system, Vec::Zero(run.m()), run.config.lambda_lo, run.config.lambda_hi,
                   run.config.continuation, run.config.integration);
}

int cmd_natfreq(Run& run, std::ostream& log) {
  const auto& p = run.system.reference;
  double w1 = 0.0, w2 = 0.0;
  if (run.config.model == "two_mode") {
    std::tie(w1, w2) = linear_natural_frequencies(p);
    log << "natural frequencies: " << fmt(w1, "%.4f") << " " << fmt(w2, "%.4f") << "\n";
    run.report["natural_frequencies"] = {w1, w2};
  } else {
    w1 = std::sqrt(p["k"] / p["m"]);
    log << "natural frequency: " << fmt(w1, "%.4f") << "\n";
    run.report["natural_frequencies"] = {w1};
  }
  return kSuccess;
}

int cmd_frc(Run& run, std::ostream& log) {
  const Branch frc = reference_curve(run);
  run.write(frc, "0", 0);
  const auto folds = branch_folds(frc);
  run.report["folds"] = folds;
  log << "reference curve: " << frc.points.size() << " points, " << folds.size() << " folds, "
      << to_string(frc.termination) << "\n";
  return frc.termination == Termination::range_exit ? kSuccess : kNumericalFailure;
}

int cmd_expand(Run& run, std::ostream& log) {
  if (!run.config.expand_omega) throw ConfigError("expand needs expand_omega");
  const double omega = *run.config.expand_omega;
  const MarginOptions opt = margin_options(run.config);
  const Branch frc = reference_curve(run);
  const auto orbits = frc_points_at(run.system, frc, omega, opt.continuation, opt.integration);
  if (orbits.empty()) {
    run.diagnostics.push_back("no reference orbit at omega " + fmt(omega));
    return kNumericalFailure;
  }
  std::vector<MarginSeed> seeds;
  for (std::size_t k = 0; k < orbits.size(); ++k) {
    try {
      const auto res = expand_uncertainty(run.system, orbits[k], run.config.R, opt);
      for (std::size_t j = 0; j < res.branches.size(); ++j)
        if (!res.branches[j].points.empty())
          run.write(res.branches[j], "o" + std::to_string(k) + "_" + std::to_string(j), res.branches[j].family);
      for (std::size_t j = 0; j < res.marginal.size(); ++j)
        seeds.push_back({res.marginal[j], res.marginal_family[j], "o" + std::to_string(k) + "_" + std::to_string(j)});
    } catch (const ContinuationError& e) {
      run.diagnostics.push_back("orbit " + std::to_string(k) + ": " + e.what());
    }
  }
  if (seeds.empty()) return kNumericalFailure;
  write_branch_csv(run.dir / "seeds.csv", seeds_as_branch(seeds), "seeds", run.n(), run.m());
  run.report["seeds_file"] = "seeds.csv";
  run.report["seeds"] = seeds.size();
  log << "expansion at omega " << fmt(omega) << ": " << orbits.size() << " reference orbits, " << seeds.size()
      << " marginal points\n";
  return kSuccess;
}

int cmd_propagate(Run& run, std::ostream& log) {
  if (run.config.seeds_file.empty()) throw ConfigError("propagate needs seeds_file");
  std::vector<MarginSeed> seeds;
  try {
    seeds = seeds_from_rows(read_branch_csv(run.config.seeds_file));
  } catch (const RecordError& e) {
    throw ConfigError(std::string("seeds_file: ") + e.what());
  }
  for (const auto& s : seeds)
    if (s.point.x0.size() != run.n() || s.point.eps.size() != run.m())
      throw ConfigError("seeds_file does not match the model layout");
  MarginOptions opt = margin_options(run.config);
  opt.reference_orientation = reference_orientation(run.system, opt);
  const auto branches = propagate_margins(run.system, seeds, run.config.R, opt, &run.diagnostics);
  run.write_margins(branches);
  log << "propagation: " << seeds.size() << " seeds, " << branches.size() << " branches\n";
  return branches.empty() ? kNumericalFailure : kSuccess;
}

void summarize(const MarginRun& mr, std::ostream& log) {
  for (std::size_t i = 0; i < mr.branches.size(); ++i) {
    const auto& b = mr.branches[i];
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& p : b.points) {
      lo = std::min(lo, p.lambda);
      hi = std::max(hi, p.lambda);
    }
    log << "  branch " << i << " " << family_tag(b.family) << " " << to_string(b.termination) << " omega ["
        << fmt(lo, "%.4f") << ", " << fmt(hi, "%.4f") << "] " << b.points.size() << " points\n";
  }
}

int cmd_margins(Run& run, std::ostream& log) {
  const auto mr = compute_margins(run.system, run.config.R, run.config.seed_omegas, margin_options(run.config));
  run.diagnostics.insert(run.diagnostics.end(), mr.diagnostics.begin(), mr.diagnostics.end());
  run.write(mr.reference_frc, "0", 0);
  run.write_margins(mr.branches);
  log << "margins at R = " << fmt(run.config.R) << ": " << mr.seeds.size() << " seeds, " << mr.branches.size()
      << " branches\n";
  summarize(mr, log);
  return mr.branches.empty() ? kNumericalFailure : kSuccess;
}

json report_json(const EnvelopeReport& rep) {
  json j = {{"samples", rep.samples},
            {"failures", rep.failures},
            {"failure_messages", rep.failure_messages},
            {"detached_samples", rep.detached_samples},
            {"max_violation", rep.max_violation},
            {"violation_lambda", rep.violation_lambda},
            {"max_slack", rep.max_slack},
            {"slack_lambda", rep.slack_lambda},
            {"uncovered_bins", rep.uncovered_bins},
            {"folds", rep.folds},
            {"passed", rep.passed()}};
  if (rep.detached_samples > 0) j["detached_band"] = {rep.detached_lo, rep.detached_hi};
  return j;
}

void write_envelope(const fs::path& path, const EnvelopeReport& rep) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RecordError("cannot write '" + path.string() + "'");
  out << "lambda,oracle_min,oracle_max,margin_min,margin_max,covered,near_fold,violation,slack\n";
  for (const auto& b : rep.bins) {
    out << fmt(b.lambda, "%.17g") << ',' << fmt(b.oracle_min, "%.17g") << ',' << fmt(b.oracle_max, "%.17g") << ','
        << fmt(b.margin_min, "%.17g") << ',' << fmt(b.margin_max, "%.17g") << ',' << b.covered << ',' << b.near_fold
        << ',' << fmt(b.violation, "%.17g") << ',' << fmt(b.slack, "%.17g") << '\n';
  }
}

int cmd_grid_validate(Run& run, std::ostream& log) {
  const auto v = validate_margins(run.system, run.config, run.config.R);
  run.diagnostics.insert(run.diagnostics.end(), v.margins.diagnostics.begin(), v.margins.diagnostics.end());
  run.write(v.margins.reference_frc, "0", 0);
  run.write_margins(v.margins.branches);
  write_envelope(run.dir / "envelope.csv", v.report);
  run.report = report_json(v.report);
  const auto& r = v.report;
  log << "grid oracle at R = " << fmt(run.config.R) << ": " << r.samples << " samples, " << r.failures
      << " failed, " << r.detached_samples << " with detached curves\n";
  if (r.detached_samples > 0)
    log << "  detached curves over omega [" << fmt(r.detached_lo, "%.4f") << ", " << fmt(r.detached_hi, "%.4f")
        << "]\n";
  log << "  max violation " << fmt(r.max_violation) << " at omega " << fmt(r.violation_lambda, "%.4f")
      << "; max slack " << fmt(r.max_slack) << " at omega " << fmt(r.slack_lambda, "%.4f")
      << "; uncovered bins " << r.uncovered_bins << "\n";
  log << "  " << (r.passed() ? "PASS" : "FAIL") << "\n";
  return r.passed() ? kSuccess : kValidationFailed;
}

int cmd_isola_scan(Run& run, std::ostream& log) {
  const auto scan = scan_isola(run.system, run.config);
  json levels = json::array();
  for (const auto& l : scan.levels) {
    json loops = json::array();
    for (const auto& [lo, hi] : l.loops) loops.push_back({lo, hi});
    levels.push_back({{"R", l.R}, {"isola", l.isola}, {"loops", loops}});
    log << "R = " << fmt(l.R) << ": " << (l.isola ? "closed negative loop" : "no isola");
    for (const auto& [lo, hi] : l.loops) log << " [" << fmt(lo, "%.4f") << ", " << fmt(hi, "%.4f") << "]";
    log << "\n";
  }
  run.report["levels"] = levels;
  run.report["R_crit"] = scan.critical;
  run.report["bisection_runs"] = scan.evaluations;
  log << "R_crit = " << fmt(scan.critical, "%.5f") << " (bracket [" << fmt(run.config.isola_scan.lo) << ", "
      << fmt(run.config.isola_scan.hi) << "], tol " << fmt(run.config.isola_scan.tol) << ")\n";
  return kSuccess;
}

using Handler = std::function<int(Run&, std::ostream&)>;

const std::vector<std::pair<std::string, Handler>>& handlers() {
  static const std::vector<std::pair<std::string, Handler>> all = {
      {"frc", cmd_frc},           {"expand", cmd_expand},     {"propagate", cmd_propagate},
      {"margins", cmd_margins},   {"grid-validate", cmd_grid_validate},
      {"isola-scan", cmd_isola_scan}, {"natfreq", cmd_natfreq}};
  return all;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, h] : handlers()) out.push_back(name);
    return out;
  }();
  return names;
}

std::vector<std::pair<double, double>> closed_negative_loops(const std::vector<Branch>& branches) {
  std::vector<std::pair<double, double>> out;
  for (const auto& b : branches) {
    if (b.family >= 0 || b.termination != Termination::closed_loop) continue;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& p : b.points) {
      lo = std::min(lo, p.lambda);
      hi = std::max(hi, p.lambda);
    }
    out.emplace_back(lo, hi);
  }
  return out;
}

ValidationRun validate_margins(const UncertainSystem& system, const RunConfig& config, double R) {
  ValidationRun v;
  v.margins = compute_margins(system, R, config.seed_omegas, margin_options(config));
  OracleInputs in;
  in.system = &system;
  in.R = R;
  in.lambda_lo = config.lambda_lo;
  in.lambda_hi = config.lambda_hi;
  in.reference_frc = &v.margins.reference_frc;
  for (const auto& b : v.margins.branches) in.margins.push_back(&b);
  in.settings = config.oracle;
  in.continuation = config.continuation;
  in.integration = config.integration;
  in.threads = config.threads;
  v.report = grid_validate(in);
  return v;
}

IsolaScan scan_isola(const UncertainSystem& system, const RunConfig& config) {
  IsolaScan scan;
  const MarginOptions opt = margin_options(config);
  auto level = [&](double R) {
    const auto mr = compute_margins(system, R, config.seed_omegas, opt);
    IsolaScan::Level l;
    l.R = R;
    l.loops = closed_negative_loops(mr.branches);
    l.isola = has_negative_isola(mr.branches);
    return l;
  };
  const auto& levels = config.isola_scan.levels.empty() ? config.R_list : config.isola_scan.levels;
  for (double R : levels) scan.levels.push_back(level(R));
  scan.critical = locate_critical_level(
      [&](double R) {
        ++scan.evaluations;
        return level(R).isola;
      },
      config.isola_scan.lo, config.isola_scan.hi, config.isola_scan.tol);
  return scan;
}

CommandResult run_command(const std::string& command, const RunConfig& config, std::ostream& log) {
  CommandResult result;
  const auto& hs = handlers();
  const auto it = std::find_if(hs.begin(), hs.end(), [&](const auto& h) { return h.first == command; });
  if (it == hs.end()) {
    log << "error: unknown command '" << command << "'\n";
    result.exit_code = kConfigError;
    return result;
  }

  const auto start = std::chrono::steady_clock::now();
  const std::string hash = config_hash(config);
  Run run{config, {}, {}, {}, {}, {}};
  std::string status = "ok";
  try {
    run.system = build_system(config);
    run.dir = fs::path(config.output_dir) / (command + "_" + (config.preset.empty() ? config.model : config.preset) +
                                             "_" + hash);
    fs::create_directories(run.dir);
    result.run_dir = run.dir;
    result.exit_code = it->second(run, log);
    if (result.exit_code == kNumericalFailure) status = "numerical_failure";
    if (result.exit_code == kValidationFailed) status = "validation_failed";
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    run.diagnostics.push_back(e.what());
    result.exit_code = kConfigError;
    status = "config_error";
  } catch (const fs::filesystem_error& e) {
    log << "I/O error: " << e.what() << "\n";
    run.diagnostics.push_back(e.what());
    result.exit_code = kNumericalFailure;
    status = "io_error";
  } catch (const std::exception& e) {
    log << "numerical failure: " << e.what() << "\n";
    run.diagnostics.push_back(e.what());
    result.exit_code = kNumericalFailure;
    status = "numerical_failure";
  }
  for (const auto& d : run.diagnostics) log << "  note: " << d << "\n";

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.manifest = {{"command", command},
                     {"preset", config.preset},
                     {"config_hash", hash},
                     {"config", to_json(config)},
                     {"status", status},
                     {"exit_code", result.exit_code},
                     {"branches", run.branches},
                     {"diagnostics", run.diagnostics},
                     {"report", run.report},
                     {"wall_time_s", wall}};
  if (!run.dir.empty()) {
    try {
      write_json(run.dir / "manifest.json", result.manifest);
    } catch (const RecordError& e) {
      log << "I/O error: " << e.what() << "\n";
      if (result.exit_code == kSuccess) result.exit_code = kNumericalFailure;
    }
  }
  return result;
}

}  // namespace uqcont::harness
