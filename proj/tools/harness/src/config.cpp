#include "uqcont/harness/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace uqcont::harness {

using nlohmann::json;

namespace {

Preset two_mode_preset(std::string name, const TwoModeParameters& row, std::string metric,
                       std::vector<std::string> uncertain, std::vector<double> seeds) {
  Preset p;
  p.name = std::move(name);
  p.model = "two_mode";
  p.parameters = two_mode_parameters(row, 1.0);
  p.metric = std::move(metric);
  p.uncertain = std::move(uncertain);
  p.seed_omegas = std::move(seeds);
  return p;
}

std::vector<Preset> make_presets() {
  std::vector<Preset> out;
  out.push_back(two_mode_preset("two_mode_4a", {1, 1, 0.05, 0.005, 0.05, 1, 1, 1, 1, 0.5, 1, 0.03, 0.03}, "q1",
                                {"k1", "F1"}, {0.7, 1.0, 1.4, 1.8}));
  Preset b = two_mode_preset("two_mode_4b", {1, 1, 0.08, 0.02, 0.05, 1, 0.2, 0.8, 1, 0.02, 2, 0.1, -0.03}, "q2",
                             {"c1", "F1"}, {0.8, 1.2, 1.6});
  b.R_list = {0.025, 0.05, 0.075, 0.1};
  out.push_back(std::move(b));
  out.push_back(two_mode_preset("two_mode_4c", {1, 1, 0.008, 0.001, 0.008, 1, 0.04, 1, 0.5, 0.01, 0.5, -0.005, 0.0052},
                                "q2", {"F1", "F2"}, {0.9, 1.0, 1.1}));
  // The isola sits on the upper side of the primary peak (omega ~ 1.45-1.88),
  // so one seed is placed there.
  Preset d = two_mode_preset("two_mode_4d", {1, 0.05, 0.015, 0.015, 0, 1, 0.0454, 0, 1, 0.0042, 0, 0.2, 0}, "q2",
                             {"c1", "F1"}, {0.95, 1.0, 1.05, 1.6});
  d.R_list = {0.07, 0.10};
  out.push_back(std::move(d));

  Preset s;
  s.name = "duffing_s2";
  s.model = "duffing";
  s.parameters = duffing_parameters(1.0, 0.1, 1.0, 1.0, 0.2, 1.0);
  s.metric = "q";
  s.uncertain = {"c", "F"};
  s.lambda_lo = 0.3;
  s.lambda_hi = 2.0;
  s.seed_omegas = {2.0};
  out.push_back(std::move(s));
  return out;
}

const std::set<std::string> kTopKeys = {
    "preset", "model", "parameters", "metric", "uncertain", "R", "R_list", "lambda_range", "seed_omegas",
    "expand_omega", "seeds_file", "continuation", "integration", "oracle", "isola_scan", "output_dir", "threads"};

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : obj.items())
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void read_continuation(const json& obj, ContinuationSettings& c) {
  const std::string w = "continuation";
  reject_unknown(obj, {"h_init", "h_min", "h_max", "growth", "easy_iterations", "max_steps", "tolerance",
                       "max_corrector_iterations", "max_halvings", "min_tangent_dot", "jacobian_refresh_ratio",
                       "fd_step", "closed_loop_tolerance", "closed_loop_min_arclength"},
                 w);
  read(obj, "h_init", c.h_init, w);
  read(obj, "h_min", c.h_min, w);
  read(obj, "h_max", c.h_max, w);
  read(obj, "growth", c.growth, w);
  read(obj, "easy_iterations", c.easy_iterations, w);
  read(obj, "max_steps", c.max_steps, w);
  read(obj, "tolerance", c.tolerance, w);
  read(obj, "max_corrector_iterations", c.max_corrector_iterations, w);
  read(obj, "max_halvings", c.max_halvings, w);
  read(obj, "min_tangent_dot", c.min_tangent_dot, w);
  read(obj, "jacobian_refresh_ratio", c.jacobian_refresh_ratio, w);
  read(obj, "fd_step", c.fd_step, w);
  read(obj, "closed_loop_tolerance", c.closed_loop_tolerance, w);
  read(obj, "closed_loop_min_arclength", c.closed_loop_min_arclength, w);
  require(c.h_min > 0.0 && c.h_min <= c.h_init && c.h_init <= c.h_max, "continuation: need 0 < h_min <= h_init <= h_max");
  require(c.growth >= 1.0, "continuation.growth must be >= 1");
  require(c.max_steps > 0 && c.max_corrector_iterations > 0, "continuation: step limits must be positive");
  require(c.tolerance > 0.0 && c.fd_step > 0.0, "continuation: tolerances must be positive");
  require(c.min_tangent_dot > -1.0 && c.min_tangent_dot < 1.0, "continuation.min_tangent_dot must be in (-1, 1)");
}

void read_integration(const json& obj, IntegrationSettings& s) {
  const std::string w = "integration";
  reject_unknown(obj, {"rel_tol", "abs_tol", "max_steps"}, w);
  read(obj, "rel_tol", s.rel_tol, w);
  read(obj, "abs_tol", s.abs_tol, w);
  read(obj, "max_steps", s.max_steps, w);
  require(s.rel_tol > 0.0 && s.abs_tol > 0.0 && s.max_steps > 0, "integration settings must be positive");
}

void read_oracle(const json& obj, OracleSettings& o) {
  const std::string w = "oracle";
  reject_unknown(obj, {"rings", "angles", "bin_width", "fold_margin", "violation_tol", "slack_tol", "relative_floor",
                       "max_failure_fraction", "detect_detached", "probe_spacing"},
                 w);
  read(obj, "rings", o.rings, w);
  read(obj, "angles", o.angles, w);
  read(obj, "bin_width", o.bin_width, w);
  read(obj, "fold_margin", o.fold_margin, w);
  read(obj, "violation_tol", o.violation_tol, w);
  read(obj, "slack_tol", o.slack_tol, w);
  read(obj, "relative_floor", o.relative_floor, w);
  read(obj, "max_failure_fraction", o.max_failure_fraction, w);
  read(obj, "detect_detached", o.detect_detached, w);
  read(obj, "probe_spacing", o.probe_spacing, w);
  require(o.rings >= 1 && o.angles >= 1, "oracle: rings and angles must be >= 1");
  require(o.bin_width > 0.0 && o.probe_spacing > 0.0, "oracle: bin_width and probe_spacing must be positive");
  require(o.violation_tol >= 0.0 && o.slack_tol >= 0.0 && o.fold_margin >= 0.0 && o.relative_floor >= 0.0,
          "oracle: tolerances must be nonnegative");
  require(o.max_failure_fraction >= 0.0 && o.max_failure_fraction <= 1.0,
          "oracle.max_failure_fraction must be in [0, 1]");
}

void read_isola(const json& obj, IsolaScanSettings& s) {
  const std::string w = "isola_scan";
  reject_unknown(obj, {"levels", "bracket", "tol"}, w);
  read(obj, "levels", s.levels, w);
  std::vector<double> bracket{s.lo, s.hi};
  read(obj, "bracket", bracket, w);
  require(bracket.size() == 2 && bracket[0] >= 0.0 && bracket[0] < bracket[1],
          "isola_scan.bracket must be [lo, hi] with 0 <= lo < hi");
  s.lo = bracket[0];
  s.hi = bracket[1];
  read(obj, "tol", s.tol, w);
  require(s.tol > 0.0, "isola_scan.tol must be positive");
  for (double r : s.levels) require(r >= 0.0, "isola_scan.levels must be nonnegative");
}

void apply_preset(const Preset& p, RunConfig& c) {
  c.preset = p.name;
  c.model = p.model;
  c.metric = p.metric;
  c.uncertain = p.uncertain;
  c.R = p.R;
  c.R_list = p.R_list;
  c.lambda_lo = p.lambda_lo;
  c.lambda_hi = p.lambda_hi;
  c.seed_omegas = p.seed_omegas;
}

ParameterSet base_parameters(const std::string& model) {
  if (model == "two_mode") return two_mode_parameters(TwoModeParameters{}, 1.0);
  if (model == "duffing") return duffing_parameters(1.0, 0.0, 1.0, 0.0, 0.0, 1.0);
  throw ConfigError("unknown model '" + model + "' (expected two_mode or duffing)");
}

json continuation_json(const ContinuationSettings& c) {
  return {{"h_init", c.h_init},
          {"h_min", c.h_min},
          {"h_max", c.h_max},
          {"growth", c.growth},
          {"easy_iterations", c.easy_iterations},
          {"max_steps", c.max_steps},
          {"tolerance", c.tolerance},
          {"max_corrector_iterations", c.max_corrector_iterations},
          {"max_halvings", c.max_halvings},
          {"min_tangent_dot", c.min_tangent_dot},
          {"jacobian_refresh_ratio", c.jacobian_refresh_ratio},
          {"fd_step", c.fd_step},
          {"closed_loop_tolerance", c.closed_loop_tolerance},
          {"closed_loop_min_arclength", c.closed_loop_min_arclength}};
}

}  // namespace

const std::vector<Preset>& presets() {
  static const std::vector<Preset> all = make_presets();
  return all;
}

const Preset& find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  throw ConfigError("unknown preset '" + name + "'");
}

std::vector<std::string> state_names(const std::string& model) {
  if (model == "two_mode") return {"q1", "dq1", "q2", "dq2", "s1", "s2"};
  if (model == "duffing") return {"q", "dq", "s1", "s2"};
  throw ConfigError("unknown model '" + model + "'");
}

RunConfig parse_config(const json& doc) {
  reject_unknown(doc, kTopKeys, "config");
  RunConfig c;
  const std::string w = "config";

  std::string preset;
  read(doc, "preset", preset, w);
  if (!preset.empty()) apply_preset(find_preset(preset), c);
  read(doc, "model", c.model, w);
  if (c.model.empty()) throw ConfigError("config needs a preset or a model");
  if (!preset.empty() && c.model != find_preset(preset).model)
    throw ConfigError("model '" + c.model + "' does not match preset '" + preset + "'");

  read(doc, "parameters", c.parameters, w);
  read(doc, "metric", c.metric, w);
  read(doc, "uncertain", c.uncertain, w);
  read(doc, "R", c.R, w);
  read(doc, "R_list", c.R_list, w);
  std::vector<double> range{c.lambda_lo, c.lambda_hi};
  read(doc, "lambda_range", range, w);
  require(range.size() == 2 && range[0] > 0.0 && range[0] < range[1], "lambda_range must be [lo, hi] with 0 < lo < hi");
  c.lambda_lo = range[0];
  c.lambda_hi = range[1];
  read(doc, "seed_omegas", c.seed_omegas, w);
  if (doc.contains("expand_omega")) {
    double omega = 0.0;
    read(doc, "expand_omega", omega, w);
    c.expand_omega = omega;
  }
  read(doc, "seeds_file", c.seeds_file, w);
  if (doc.contains("continuation")) read_continuation(doc["continuation"], c.continuation);
  if (doc.contains("integration")) read_integration(doc["integration"], c.integration);
  if (doc.contains("oracle")) read_oracle(doc["oracle"], c.oracle);
  if (doc.contains("isola_scan")) read_isola(doc["isola_scan"], c.isola_scan);
  read(doc, "output_dir", c.output_dir, w);
  read(doc, "threads", c.threads, w);

  require(std::isfinite(c.R) && c.R >= 0.0, "R must be a nonnegative number");
  for (double r : c.R_list) require(std::isfinite(r) && r >= 0.0, "R_list entries must be nonnegative");
  for (double s : c.seed_omegas)
    require(s >= c.lambda_lo && s <= c.lambda_hi, "seed_omegas must lie inside lambda_range");
  if (c.expand_omega)
    require(*c.expand_omega >= c.lambda_lo && *c.expand_omega <= c.lambda_hi, "expand_omega must lie inside lambda_range");
  require(c.threads >= 1, "threads must be >= 1");
  require(!c.uncertain.empty(), "at least one uncertain parameter is required");
  (void)build_system(c);  // names, metric and parameter values
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

UncertainSystem build_system(const RunConfig& config) {
  UncertainSystem sys;
  if (config.model == "two_mode") {
    sys.model = std::make_shared<TwoModeOscillator>();
  } else if (config.model == "duffing") {
    sys.model = std::make_shared<DuffingOscillator>();
  } else {
    throw ConfigError("unknown model '" + config.model + "' (expected two_mode or duffing)");
  }

  ParameterSet params = config.preset.empty() ? base_parameters(config.model) : find_preset(config.preset).parameters;
  for (const auto& [name, value] : config.parameters) {
    if (!params.find(name)) throw ConfigError("unknown parameter '" + name + "' for model " + config.model);
    if (name == params.names[params.lambda_index]) throw ConfigError("the frequency is the continuation parameter");
    params = params.with(name, value);
  }

  const auto names = state_names(config.model);
  const auto it = std::find(names.begin(), names.end(), config.metric);
  if (it == names.end()) throw ConfigError("unknown metric '" + config.metric + "' for model " + config.model);
  sys.metric = std::make_shared<CoordinateMetric>(static_cast<int>(it - names.begin()), config.metric);

  sys.reference = params;
  for (const auto& name : config.uncertain) sys.uncertainty.entries.push_back({name, UncertaintyKind::proportional});
  try {
    sys.validate();
  } catch (const ModelError& e) {
    throw ConfigError(e.what());
  }
  return sys;
}

MarginOptions margin_options(const RunConfig& config) {
  MarginOptions opt;
  opt.continuation = config.continuation;
  opt.integration = config.integration;
  opt.lambda_lo = config.lambda_lo;
  opt.lambda_hi = config.lambda_hi;
  opt.threads = config.threads;
  return opt;
}

json to_json(const RunConfig& c) {
  json j;
  j["preset"] = c.preset;
  j["model"] = c.model;
  j["parameters"] = c.parameters;
  j["metric"] = c.metric;
  j["uncertain"] = c.uncertain;
  j["R"] = c.R;
  j["R_list"] = c.R_list;
  j["lambda_range"] = {c.lambda_lo, c.lambda_hi};
  j["seed_omegas"] = c.seed_omegas;
  if (c.expand_omega) j["expand_omega"] = *c.expand_omega;
  if (!c.seeds_file.empty()) j["seeds_file"] = c.seeds_file;
  j["continuation"] = continuation_json(c.continuation);
  j["integration"] = {{"rel_tol", c.integration.rel_tol},
                      {"abs_tol", c.integration.abs_tol},
                      {"max_steps", c.integration.max_steps}};
  const auto& o = c.oracle;
  j["oracle"] = {{"rings", o.rings},
                 {"angles", o.angles},
                 {"bin_width", o.bin_width},
                 {"fold_margin", o.fold_margin},
                 {"violation_tol", o.violation_tol},
                 {"slack_tol", o.slack_tol},
                 {"relative_floor", o.relative_floor},
                 {"max_failure_fraction", o.max_failure_fraction},
                 {"detect_detached", o.detect_detached},
                 {"probe_spacing", o.probe_spacing}};
  j["isola_scan"] = {{"levels", c.isola_scan.levels},
                     {"bracket", {c.isola_scan.lo, c.isola_scan.hi}},
                     {"tol", c.isola_scan.tol}};
  return j;
}

std::string config_hash(const RunConfig& config) {
  const std::string text = to_json(config).dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace uqcont::harness
