#pragma once

// Solver-agnostic problem representation: a linear program with row and
// column bounds in sparse triplet form, optionally with integer columns.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "restore/network.hpp"

namespace restore::milp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

class SolverError : public Error {
 public:
  using Error::Error;
};

enum class Sense { minimize, maximize };

struct Triplet {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

class LinearProgram {
 public:
  Sense sense = Sense::minimize;
  std::vector<double> objective;
  std::vector<Triplet> entries;
  std::vector<double> row_lower, row_upper;
  std::vector<double> col_lower, col_upper;
  std::vector<std::string> col_names;
  std::vector<std::string> row_names;

  [[nodiscard]] int num_cols() const { return static_cast<int>(objective.size()); }
  [[nodiscard]] int num_rows() const { return static_cast<int>(row_lower.size()); }

  int add_column(std::string name, double lower, double upper, double cost = 0.0) {
    objective.push_back(cost);
    col_lower.push_back(lower);
    col_upper.push_back(upper);
    col_names.push_back(std::move(name));
    return num_cols() - 1;
  }

  /// Adds `lower <= sum(coef * x[col]) <= upper`. Zero coefficients are
  /// dropped; repeated columns are kept as separate triplets and summed by
  /// consumers.
  int add_row(std::string name, double lower, double upper,
              std::initializer_list<std::pair<int, double>> terms) {
    return add_row(std::move(name), lower, upper, std::vector<std::pair<int, double>>(terms));
  }

  int add_row(std::string name, double lower, double upper, const std::vector<std::pair<int, double>>& terms) {
    const int r = num_rows();
    row_lower.push_back(lower);
    row_upper.push_back(upper);
    row_names.push_back(std::move(name));
    for (auto [c, v] : terms)
      if (v != 0.0) entries.push_back({r, c, v});
    return r;
  }

  /// Row activities A x.
  [[nodiscard]] std::vector<double> row_activity(const std::vector<double>& x) const {
    std::vector<double> act(num_rows(), 0.0);
    for (const auto& t : entries) act[t.row] += t.value * x[t.col];
    return act;
  }

  [[nodiscard]] double objective_value(const std::vector<double>& x) const {
    double v = 0.0;
    for (int j = 0; j < num_cols(); ++j) v += objective[j] * x[j];
    return v;
  }

  /// Empty string when well formed, otherwise the first problem found.
  [[nodiscard]] std::string check() const {
    const auto n = objective.size();
    if (col_lower.size() != n || col_upper.size() != n) return "column bound arrays do not match objective size";
    if (row_upper.size() != row_lower.size()) return "row bound arrays differ in size";
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(objective[j])) return "non-finite objective coefficient in column " + std::to_string(j);
      if (col_lower[j] > col_upper[j]) return "column " + std::to_string(j) + " has lower > upper";
    }
    for (std::size_t i = 0; i < row_lower.size(); ++i)
      if (row_lower[i] > row_upper[i]) return "row " + std::to_string(i) + " has lower > upper";
    for (const auto& t : entries) {
      if (t.row < 0 || t.row >= num_rows() || t.col < 0 || t.col >= num_cols()) return "triplet index out of range";
      if (!std::isfinite(t.value)) return "non-finite matrix entry";
    }
    return {};
  }
};

struct MilpProblem {
  LinearProgram lp;
  std::vector<int> integer_columns;
  /// Optional, parallel to integer_columns: fractional columns of higher
  /// priority are branched on first.
  std::vector<int> branch_priority;

  [[nodiscard]] std::string check() const {
    if (auto msg = lp.check(); !msg.empty()) return msg;
    if (!branch_priority.empty() && branch_priority.size() != integer_columns.size())
      return "branch priorities do not match the integer columns";
    for (int j : integer_columns) {
      if (j < 0 || j >= lp.num_cols()) return "integer column index out of range";
      if (lp.col_lower[j] < 0.0 || lp.col_upper[j] > 1.0) return "integer column " + std::to_string(j) + " is not binary";
    }
    return {};
  }
};

enum class SolveStatus { optimal, infeasible, unbounded, incumbent_with_gap };

[[nodiscard]] inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::incumbent_with_gap: return "incumbent_with_gap";
  }
  return "?";
}

struct Solution {
  SolveStatus status = SolveStatus::infeasible;
  double objective = 0.0;
  std::vector<double> x;
  double gap = 0.0;         // relative bound gap (MILP)
  double bound = 0.0;       // best proven bound on the objective
  long iterations = 0;      // simplex pivots
  long nodes = 0;           // branch-and-bound nodes
  double max_violation = 0.0;

  [[nodiscard]] bool has_point() const {
    return status == SolveStatus::optimal || status == SolveStatus::incumbent_with_gap;
  }
};

/// Largest violation of row bounds, column bounds and (optionally)
/// integrality by `x`.
[[nodiscard]] inline double max_violation(const LinearProgram& lp, const std::vector<double>& x,
                                          const std::vector<int>& integer_columns = {}) {
  double worst = 0.0;
  const auto act = lp.row_activity(x);
  for (int i = 0; i < lp.num_rows(); ++i) {
    worst = std::max(worst, lp.row_lower[i] - act[i]);
    worst = std::max(worst, act[i] - lp.row_upper[i]);
  }
  for (int j = 0; j < lp.num_cols(); ++j) {
    worst = std::max(worst, lp.col_lower[j] - x[j]);
    worst = std::max(worst, x[j] - lp.col_upper[j]);
  }
  for (int j : integer_columns) worst = std::max(worst, std::abs(x[j] - std::round(x[j])));
  return worst;
}

namespace detail {

inline std::string lp_name(const std::vector<std::string>& names, int i, char prefix) {
  std::string s = (i < static_cast<int>(names.size()) && !names[i].empty()) ? names[i]
                                                                            : prefix + std::to_string(i);
  for (char& c : s)
    if (c == ' ' || c == ':' || c == '[' || c == ']' || c == ',' || c == '-' || c == '+') c = '_';
  if (!s.empty() && (std::isdigit(static_cast<unsigned char>(s[0])) || s[0] == '.' || s[0] == 'e' || s[0] == 'E'))
    s = std::string(1, prefix) + s;
  return s;
}

inline void lp_term(std::ostream& os, double v, const std::string& name, bool first) {
  if (v < 0) os << (first ? "-" : "- ") << -v << ' ' << name;
  else os << (first ? "" : "+ ") << v << ' ' << name;
}

}  // namespace detail

/// Writes `p` in CPLEX LP text format for cross-checking with external tools.
inline void write_lp_format(std::ostream& os, const MilpProblem& p) {
  const auto& lp = p.lp;
  os.precision(17);
  os << (lp.sense == Sense::maximize ? "Maximize\n" : "Minimize\n") << " obj:";
  bool first = true;
  for (int j = 0; j < lp.num_cols(); ++j) {
    if (lp.objective[j] == 0.0) continue;
    os << ' ';
    detail::lp_term(os, lp.objective[j], detail::lp_name(lp.col_names, j, 'x'), first);
    first = false;
  }
  if (first) os << " 0 " << detail::lp_name(lp.col_names, 0, 'x');
  os << "\nSubject To\n";
  std::vector<std::vector<std::pair<int, double>>> rows(lp.num_rows());
  for (const auto& t : lp.entries) rows[t.row].push_back({t.col, t.value});
  for (int i = 0; i < lp.num_rows(); ++i) {
    const double lo = lp.row_lower[i], hi = lp.row_upper[i];
    if (!std::isfinite(lo) && !std::isfinite(hi)) continue;
    auto body = [&](std::ostream& o) {
      bool f = true;
      for (auto [c, v] : rows[i]) {
        o << ' ';
        detail::lp_term(o, v, detail::lp_name(lp.col_names, c, 'x'), f);
        f = false;
      }
      if (f) o << " 0 " << detail::lp_name(lp.col_names, 0, 'x');
    };
    const auto name = detail::lp_name(lp.row_names, i, 'r');
    if (lo == hi) {
      os << ' ' << name << ':';
      body(os);
      os << " = " << lo << '\n';
      continue;
    }
    if (std::isfinite(lo)) {
      os << ' ' << name << (std::isfinite(hi) ? "_lo:" : ":");
      body(os);
      os << " >= " << lo << '\n';
    }
    if (std::isfinite(hi)) {
      os << ' ' << name << (std::isfinite(lo) ? "_hi:" : ":");
      body(os);
      os << " <= " << hi << '\n';
    }
  }
  os << "Bounds\n";
  std::set<int> ints(p.integer_columns.begin(), p.integer_columns.end());
  for (int j = 0; j < lp.num_cols(); ++j) {
    const auto name = detail::lp_name(lp.col_names, j, 'x');
    const double lo = lp.col_lower[j], hi = lp.col_upper[j];
    if (!std::isfinite(lo) && !std::isfinite(hi)) {
      os << ' ' << name << " free\n";
      continue;
    }
    os << ' ';
    if (std::isfinite(lo)) os << lo;
    else os << "-inf";
    os << " <= " << name << " <= ";
    if (std::isfinite(hi)) os << hi;
    else os << "+inf";
    os << '\n';
  }
  if (!ints.empty()) {
    os << "Binaries\n";
    for (int j : ints) os << ' ' << detail::lp_name(lp.col_names, j, 'x') << '\n';
  }
  os << "End\n";
}

}  // namespace restore::milp
