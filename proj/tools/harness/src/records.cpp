#include "uqcont/harness/records.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace uqcont::harness {

namespace {

void put(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double to_double(const std::string& s) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  // ERANGE is also raised for subnormal results, which are exact here.
  const bool overflow = errno == ERANGE && std::isinf(v);
  if (s.empty() || end != s.c_str() + s.size() || overflow) throw RecordError("bad number '" + s + "'");
  return v;
}

long to_long(const std::string& s) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size()) throw RecordError("bad integer '" + s + "'");
  return v;
}

}  // namespace

std::string family_tag(int family) {
  if (family > 0) return "pos";
  if (family < 0) return "neg";
  return "ref";
}

std::string branch_csv(const Branch& branch, const std::string& branch_id, int n, int m) {
  if (branch.points.empty()) throw RecordError("branch '" + branch_id + "' is empty");
  if (branch_id.find_first_of(",\n") != std::string::npos) throw RecordError("branch id must not contain ',' or newlines");
  std::string out = "branch_id,family,step,lambda,r,T";
  for (int i = 1; i <= m; ++i) out += ",eps_" + std::to_string(i);
  for (int i = 1; i <= n; ++i) out += ",x0_" + std::to_string(i);
  out += ",metric,abs_metric\n";
  for (std::size_t k = 0; k < branch.points.size(); ++k) {
    const auto& p = branch.points[k];
    if (p.x0.size() != n || p.eps.size() != m) throw RecordError("point size does not match the branch layout");
    out += branch_id;
    out += ',';
    out += std::to_string(p.family != 0 ? p.family : branch.family);
    out += ',';
    out += std::to_string(k);
    for (double v : {p.lambda, p.r, p.period}) {
      out += ',';
      put(out, v);
    }
    for (int i = 0; i < m; ++i) {
      out += ',';
      put(out, p.eps(i));
    }
    for (int i = 0; i < n; ++i) {
      out += ',';
      put(out, p.x0(i));
    }
    out += ',';
    put(out, p.metric_value);
    out += ',';
    put(out, std::abs(p.metric_value));
    out += '\n';
  }
  return out;
}

void write_branch_csv(const std::filesystem::path& path, const Branch& branch, const std::string& branch_id, int n,
                      int m) {
  const std::string text = branch_csv(branch, branch_id, n, m);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RecordError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw RecordError("write failed for '" + path.string() + "'");
}

std::vector<BranchRow> parse_branch_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw RecordError("missing CSV header");
  const auto header = split(line);
  int m = 0, n = 0;
  for (const auto& h : header) {
    if (h.rfind("eps_", 0) == 0) ++m;
    if (h.rfind("x0_", 0) == 0) ++n;
  }
  const std::size_t width = 6 + static_cast<std::size_t>(m + n) + 2;
  if (header.size() != width || header[0] != "branch_id" || header[3] != "lambda")
    throw RecordError("unexpected CSV header");

  std::vector<BranchRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != width) throw RecordError("row has " + std::to_string(cells.size()) + " cells, expected " +
                                                 std::to_string(width));
    BranchRow row;
    row.branch_id = cells[0];
    row.family = static_cast<int>(to_long(cells[1]));
    row.step = to_long(cells[2]);
    row.lambda = to_double(cells[3]);
    row.r = to_double(cells[4]);
    row.period = to_double(cells[5]);
    for (int i = 0; i < m; ++i) row.eps.push_back(to_double(cells[6 + static_cast<std::size_t>(i)]));
    for (int i = 0; i < n; ++i) row.x0.push_back(to_double(cells[6 + static_cast<std::size_t>(m + i)]));
    row.metric = to_double(cells[width - 2]);
    row.abs_metric = to_double(cells[width - 1]);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<BranchRow> read_branch_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RecordError("cannot read '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_branch_csv(text.str());
}

std::vector<MarginSeed> seeds_from_rows(const std::vector<BranchRow>& rows) {
  std::vector<MarginSeed> seeds;
  for (const auto& row : rows) {
    MarginSeed s;
    s.id = row.branch_id + "_" + std::to_string(row.step);
    s.family = row.family;
    auto& p = s.point;
    p.x0 = Eigen::Map<const Vec>(row.x0.data(), static_cast<Eigen::Index>(row.x0.size()));
    p.eps = Eigen::Map<const Vec>(row.eps.data(), static_cast<Eigen::Index>(row.eps.size()));
    p.r = row.r;
    p.period = row.period;
    p.lambda = row.lambda;
    p.metric_value = row.metric;
    p.family = row.family;
    seeds.push_back(std::move(s));
  }
  return seeds;
}

Branch seeds_as_branch(const std::vector<MarginSeed>& seeds) {
  Branch b;
  b.driver = "seeds";
  for (const auto& s : seeds) {
    ContinuationPoint p = s.point;
    p.family = s.family;
    b.points.push_back(std::move(p));
  }
  return b;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RecordError("cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
  if (!out) throw RecordError("write failed for '" + path.string() + "'");
}

}  // namespace uqcont::harness
