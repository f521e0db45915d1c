#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "uqcont/harness/config.hpp"
#include "uqcont/harness/oracle.hpp"

namespace uqcont::harness {

enum ExitCode : int { kSuccess = 0, kValidationFailed = 1, kConfigError = 2, kNumericalFailure = 3 };

[[nodiscard]] const std::vector<std::string>& command_names();

struct CommandResult {
  int exit_code = kSuccess;
  std::filesystem::path run_dir;  ///< empty if nothing was written
  nlohmann::json manifest;
};

/// Runs one command and writes its CSV files and manifest.json under
/// `<config.output_dir>/<command>_<preset|model>_<hash>/`. Progress and the
/// summary go to `log`.
[[nodiscard]] CommandResult run_command(const std::string& command, const RunConfig& config, std::ostream& log);

/// Envelope check of margins at level R (compute_margins + grid_validate).
struct ValidationRun {
  MarginRun margins;
  EnvelopeReport report;
};
[[nodiscard]] ValidationRun validate_margins(const UncertainSystem& system, const RunConfig& config, double R);

/// Critical uncertainty level where a closed negative margin loop appears.
struct IsolaScan {
  struct Level {
    double R = 0.0;
    bool isola = false;
    std::vector<std::pair<double, double>> loops;  ///< lambda extent of each closed negative branch
  };
  std::vector<Level> levels;
  double critical = 0.0;
  int evaluations = 0;  ///< margin runs used by the bisection
};
[[nodiscard]] IsolaScan scan_isola(const UncertainSystem& system, const RunConfig& config);

[[nodiscard]] std::vector<std::pair<double, double>> closed_negative_loops(const std::vector<Branch>& branches);

}  // namespace uqcont::harness
