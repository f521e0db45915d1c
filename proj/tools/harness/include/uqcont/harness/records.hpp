#pragma once

// CSV branch files and the per-run JSON manifest.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "uqcont/continuation.hpp"

namespace uqcont::harness {

class RecordError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One CSV row.
struct BranchRow {
  std::string branch_id;
  int family = 0;
  long step = 0;
  double lambda = 0.0;
  double r = 0.0;
  double period = 0.0;
  std::vector<double> eps;
  std::vector<double> x0;
  double metric = 0.0;
  double abs_metric = 0.0;
};

/// "pos", "neg" or "ref".
[[nodiscard]] std::string family_tag(int family);

/// Header plus one row per point; floats with 17 significant digits.
[[nodiscard]] std::string branch_csv(const Branch& branch, const std::string& branch_id, int n, int m);
/// Throws RecordError for an empty branch (before touching the file) or on
/// I/O failure.
void write_branch_csv(const std::filesystem::path& path, const Branch& branch, const std::string& branch_id, int n,
                      int m);

[[nodiscard]] std::vector<BranchRow> parse_branch_csv(const std::string& text);
[[nodiscard]] std::vector<BranchRow> read_branch_csv(const std::filesystem::path& path);

/// Margin seeds saved by `expand`, read back by `propagate`. Family, step and
/// branch id come from the row; tangents are not stored.
[[nodiscard]] std::vector<MarginSeed> seeds_from_rows(const std::vector<BranchRow>& rows);
[[nodiscard]] Branch seeds_as_branch(const std::vector<MarginSeed>& seeds);

/// Writes `doc` pretty-printed.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace uqcont::harness
