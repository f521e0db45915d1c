#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "uqcont/continuation.hpp"

namespace uqcont::harness {

/// Malformed or inconsistent run configuration (exit status 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OracleSettings {
  int rings = 3;
  int angles = 72;
  double bin_width = 0.002;
  double fold_margin = 0.02;    ///< slack is not judged this close to a fold
  double violation_tol = 1e-3;  ///< relative
  double slack_tol = 0.02;      ///< relative
  double relative_floor = 0.01;  ///< fraction of max |g_ref| used as the smallest denominator
  double max_failure_fraction = 0.05;
  bool detect_detached = true;
  double probe_spacing = 0.05;  ///< lambda spacing of detached-branch probes
};

struct IsolaScanSettings {
  std::vector<double> levels;  ///< levels reported before bisection; empty uses R_list
  double lo = 0.07;
  double hi = 0.10;
  double tol = 1e-3;
};

/// Fully resolved run configuration: preset defaults with overrides applied.
struct RunConfig {
  std::string preset;
  std::string model;
  std::map<std::string, double> parameters;  ///< overrides on top of the preset row
  std::string metric;
  std::vector<std::string> uncertain;
  double R = 0.1;
  std::vector<double> R_list;
  double lambda_lo = 0.5;
  double lambda_hi = 2.2;
  std::vector<double> seed_omegas;
  std::optional<double> expand_omega;
  std::string seeds_file;
  ContinuationSettings continuation;
  IntegrationSettings integration;
  OracleSettings oracle;
  IsolaScanSettings isola_scan;
  std::string output_dir = "out";
  int threads = 1;
};

struct Preset {
  std::string name;
  std::string model;
  ParameterSet parameters;
  std::string metric;
  std::vector<std::string> uncertain;
  double R = 0.1;
  std::vector<double> R_list;
  double lambda_lo = 0.5;
  double lambda_hi = 2.2;
  std::vector<double> seed_omegas;
};

[[nodiscard]] const std::vector<Preset>& presets();
/// Throws ConfigError for unknown names.
[[nodiscard]] const Preset& find_preset(const std::string& name);

/// Parses and validates a config document. Unknown keys, wrong types and
/// out-of-range values throw ConfigError.
[[nodiscard]] RunConfig parse_config(const nlohmann::json& doc);
[[nodiscard]] RunConfig load_config(const std::string& path);

/// Canonical JSON of everything that influences results (output_dir and
/// threads excluded).
[[nodiscard]] nlohmann::json to_json(const RunConfig& config);
/// FNV-1a of the canonical JSON, as 16 hex digits.
[[nodiscard]] std::string config_hash(const RunConfig& config);

/// Model, metric, reference parameters and uncertainty map of the run.
[[nodiscard]] UncertainSystem build_system(const RunConfig& config);
[[nodiscard]] MarginOptions margin_options(const RunConfig& config);

/// State names of a built-in model, in state order.
[[nodiscard]] std::vector<std::string> state_names(const std::string& model);

}  // namespace uqcont::harness
