#ifndef DISCONT_IO_HPP
#define DISCONT_IO_HPP

#include <Eigen/Dense>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "discont/panel.hpp"

namespace discont {

struct CsvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace io {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // trim surrounding whitespace
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CsvError(path + ": cannot open file");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    rows.push_back(split_line(line));
    if (rows.size() > 1 && rows.back().size() != rows.front().size())
      throw CsvError(path + ":" + std::to_string(lineno) + ": expected " +
                     std::to_string(rows.front().size()) + " fields, got " +
                     std::to_string(rows.back().size()));
  }
  if (rows.size() < 2) throw CsvError(path + ": needs a header and at least one row");
  return rows;
}

inline double parse_number(const std::string& s, const std::string& path, int row,
                           int col) {
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (errno != 0 || end == s.c_str() || *end != '\0')
    throw CsvError(path + ": row " + std::to_string(row + 2) + ", column " +
                   std::to_string(col + 1) + ": not a number: '" + s + "'");
  return v;
}

}  // namespace io

struct NamedPanel {
  CompositionalPanel panel;
  std::vector<std::string> categories;
};

// Reads the proportion series (`period,cat_1..cat_K`), the companion sample
// size file (`period,n`), and optionally a per-cell standard error file laid
// out like the series file. The redesign period is set separately.
inline NamedPanel read_named_panel(const std::string& series_path,
                                   const std::string& n_path,
                                   const std::string& se_path = "") {
  const auto rows = io::read_csv(series_path);
  const int T = static_cast<int>(rows.size()) - 1;
  const int K = static_cast<int>(rows.front().size()) - 1;
  if (K < 2) throw CsvError(series_path + ": needs at least two category columns");

  NamedPanel np;
  for (int k = 0; k < K; ++k) np.categories.push_back(rows[0][k + 1]);
  np.panel.proportions.resize(T, K);
  for (int t = 0; t < T; ++t) {
    np.panel.periods.push_back(rows[t + 1][0]);
    for (int k = 0; k < K; ++k)
      np.panel.proportions(t, k) = io::parse_number(rows[t + 1][k + 1], series_path, t, k + 1);
  }
  // infer the unit from the row sums (fractions vs percentages)
  np.panel.unit_total = std::abs(np.panel.proportions.row(0).sum() - 1.0) < 0.1 ? 1.0 : 100.0;

  const auto nrows = io::read_csv(n_path);
  if (static_cast<int>(nrows.size()) - 1 != T)
    throw CsvError(n_path + ": has " + std::to_string(nrows.size() - 1) +
                   " rows but the series file has " + std::to_string(T));
  np.panel.sample_sizes.resize(T);
  for (int t = 0; t < T; ++t) {
    if (nrows[t + 1][0] != np.panel.periods[t])
      throw CsvError(n_path + ": row " + std::to_string(t + 2) + ": period '" +
                     nrows[t + 1][0] + "' does not match the series file ('" +
                     np.panel.periods[t] + "')");
    np.panel.sample_sizes[t] = io::parse_number(nrows[t + 1][1], n_path, t, 1);
  }

  if (!se_path.empty()) {
    const auto srows = io::read_csv(se_path);
    if (static_cast<int>(srows.size()) - 1 != T ||
        static_cast<int>(srows.front().size()) - 1 != K)
      throw CsvError(se_path + ": shape does not match the series file");
    Eigen::MatrixXd se(T, K);
    for (int t = 0; t < T; ++t)
      for (int k = 0; k < K; ++k)
        se(t, k) = io::parse_number(srows[t + 1][k + 1], se_path, t, k + 1);
    np.panel.obs_se = se;
  }
  return np;
}

// Resolves a period given either its label or a 1-based position.
inline int resolve_period(const std::vector<std::string>& periods,
                          const std::string& spec, const std::string& what) {
  for (int t = 0; t < static_cast<int>(periods.size()); ++t)
    if (periods[t] == spec) return t;
  char* end = nullptr;
  const long idx = std::strtol(spec.c_str(), &end, 10);
  if (end != spec.c_str() && *end == '\0' && idx >= 1 &&
      idx <= static_cast<long>(periods.size()))
    return static_cast<int>(idx - 1);
  throw std::invalid_argument(what + " '" + spec + "' matches no period");
}

// Drops all periods after the given one (inclusive cut).
inline void truncate_panel(CompositionalPanel& panel, int last) {
  const int T = last + 1;
  if (T < 2 || T > panel.num_periods())
    throw std::invalid_argument("end period leaves no usable series");
  panel.periods.resize(T);
  panel.proportions.conservativeResize(T, Eigen::NoChange);
  panel.sample_sizes.conservativeResize(T);
  if (panel.obs_se) panel.obs_se->conservativeResize(T, Eigen::NoChange);
}

inline std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_series_csv(const std::string& path,
                             const std::vector<std::string>& categories,
                             const std::vector<std::string>& periods,
                             const Eigen::MatrixXd& values) {
  std::ofstream out(path);
  if (!out) throw CsvError(path + ": cannot open for writing");
  out << "period";
  for (const auto& c : categories) out << ',' << c;
  out << '\n';
  for (int t = 0; t < static_cast<int>(periods.size()); ++t) {
    out << periods[t];
    for (int k = 0; k < values.cols(); ++k) out << ',' << format_full(values(t, k));
    out << '\n';
  }
}

}  // namespace discont

#endif
