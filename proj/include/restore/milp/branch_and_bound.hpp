#pragma once

// Best-bound branch and bound over binary columns, driven by the dual
// simplex. Each branching step dives straight into the 1-branch and parks
// the 0-branch in the open-node queue together with the parent basis, so
// both children restart from a near-optimal basis.

#include <cmath>
#include <functional>
#include <memory>
#include <queue>
#include <vector>

#include "restore/milp/dual_simplex.hpp"
#include "restore/milp/linear_program.hpp"

namespace restore::milp {

struct MilpOptions {
  double rel_gap = 1e-6;
  double feasibility_tol = 1e-7;
  double integrality_tol = 1e-6;
  long node_budget = 1'000'000;
  /// Called every `progress_interval` nodes with (nodes, bound, incumbent)
  /// in the problem's own sense.
  std::function<void(long, double, double)> progress;
  long progress_interval = 1000;
};

/// Optional record of the search, one entry per processed node.
struct MilpTrace {
  std::vector<double> global_bound;
  std::vector<double> incumbent;
};

namespace detail {

struct Fixing {
  std::shared_ptr<const Fixing> parent;
  int column = -1;
  signed char value = 0;
};

struct OpenNode {
  double bound = 0.0;  // parent LP value, in the minimization sense
  long seq = 0;
  std::shared_ptr<const Fixing> fixings;
  std::shared_ptr<const Basis> basis;
};

struct NodeOrder {
  bool operator()(const OpenNode& a, const OpenNode& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.seq > b.seq;
  }
};

}  // namespace detail

/// Solves `p` to relative gap `opt.rel_gap`. Returns status optimal,
/// infeasible, unbounded (of the root relaxation), or incumbent_with_gap
/// when the node budget runs out with an incumbent in hand. Throws
/// SolverError when the budget runs out without one.
[[nodiscard]] inline Solution solve_milp(const MilpProblem& p, const MilpOptions& opt = {},
                                         MilpTrace* trace = nullptr) {
  if (auto msg = p.check(); !msg.empty()) throw SolverError("milp: malformed problem: " + msg);
  const auto& lp = p.lp;
  const double sgn = lp.sense == Sense::maximize ? -1.0 : 1.0;  // internal values are minimized
  const int n_int = static_cast<int>(p.integer_columns.size());

  SimplexOptions sopt;
  sopt.verify_tol = opt.feasibility_tol;
  DualSimplex simplex(lp, sopt);

  std::vector<signed char> current(n_int, -1);  // fixing applied to the simplex, -1 = free
  std::vector<signed char> wanted(n_int, -1);
  std::vector<int> pos_of(lp.num_cols(), -1);
  for (int k = 0; k < n_int; ++k) pos_of[p.integer_columns[k]] = k;

  auto apply_fixings = [&](const std::shared_ptr<const detail::Fixing>& f) {
    std::fill(wanted.begin(), wanted.end(), -1);
    for (auto node = f.get(); node; node = node->parent.get())
      if (wanted[pos_of[node->column]] < 0) wanted[pos_of[node->column]] = node->value;
    for (int k = 0; k < n_int; ++k) {
      if (wanted[k] == current[k]) continue;
      const int j = p.integer_columns[k];
      if (wanted[k] < 0) simplex.set_column_bounds(j, lp.col_lower[j], lp.col_upper[j]);
      else simplex.set_column_bounds(j, wanted[k], wanted[k]);
      current[k] = wanted[k];
    }
  };

  Solution best;
  best.status = SolveStatus::infeasible;
  bool have_incumbent = false;
  double incumbent = kInf;  // minimization sense
  long nodes = 0;
  long iterations = 0;

  auto gap_of = [](double bound, double inc) {
    return std::abs(inc - bound) / std::max(1e-9, std::abs(inc));
  };
  auto prunable = [&](double bound) {
    return have_incumbent && (bound >= incumbent || gap_of(bound, incumbent) <= opt.rel_gap);
  };

  // Polishes an integral LP point: fix the binaries at their rounded values,
  // re-solve for the continuous part and verify against the raw matrix.
  auto try_incumbent = [&](const std::vector<double>& x, const std::shared_ptr<const detail::Fixing>& f) {
    std::vector<double> rounded(n_int);
    for (int k = 0; k < n_int; ++k) rounded[k] = std::round(x[p.integer_columns[k]]);
    auto saved = simplex.basis();
    for (int k = 0; k < n_int; ++k) {
      const int j = p.integer_columns[k];
      simplex.set_column_bounds(j, rounded[k], rounded[k]);
      current[k] = static_cast<signed char>(rounded[k]);
    }
    auto sol = simplex.solve();
    iterations += sol.iterations;
    simplex.set_basis(saved);
    apply_fixings(f);
    if (sol.status != SolveStatus::optimal) return;
    for (int k = 0; k < n_int; ++k) sol.x[p.integer_columns[k]] = rounded[k];
    if (max_violation(lp, sol.x, p.integer_columns) > opt.feasibility_tol) return;
    const double val = sgn * lp.objective_value(sol.x);
    if (!have_incumbent || val < incumbent) {
      incumbent = val;
      have_incumbent = true;
      best.x = std::move(sol.x);
    }
  };

  std::priority_queue<detail::OpenNode, std::vector<detail::OpenNode>, detail::NodeOrder> open;
  long seq = 0;
  bool root = true;

  // Current dive state.
  std::shared_ptr<const detail::Fixing> dive_fix;
  bool diving = true;
  double dive_bound = -kInf;

  auto record = [&](double node_bound) {
    if (!trace) return;
    double gb = node_bound;
    if (!open.empty()) gb = std::min(gb, open.top().bound);
    if (have_incumbent) gb = std::min(gb, incumbent);
    trace->global_bound.push_back(sgn * gb);
    trace->incumbent.push_back(have_incumbent ? sgn * incumbent : sgn * kInf);
  };

  for (;;) {
    std::shared_ptr<const detail::Fixing> fix;
    double parent_bound;
    if (diving) {
      fix = dive_fix;
      parent_bound = dive_bound;
    } else {
      // Pop the best open node, discarding those the incumbent dominates.
      while (!open.empty() && prunable(open.top().bound)) open.pop();
      if (open.empty()) break;
      auto node = open.top();
      open.pop();
      fix = node.fixings;
      parent_bound = node.bound;
      apply_fixings(fix);
      simplex.set_basis(*node.basis);
    }
    diving = false;
    if (!root && prunable(parent_bound)) continue;

    if (nodes >= opt.node_budget) {
      if (!have_incumbent) throw SolverError("milp: node budget exhausted without an incumbent");
      open.push({parent_bound, seq++, fix, std::make_shared<Basis>(simplex.basis())});
      break;
    }
    ++nodes;
    if (opt.progress && nodes % std::max(1L, opt.progress_interval) == 0) {
      double gb = parent_bound;
      if (!open.empty()) gb = std::min(gb, open.top().bound);
      opt.progress(nodes, sgn * gb, have_incumbent ? sgn * incumbent : sgn * kInf);
    }
    auto sol = simplex.solve();
    iterations += sol.iterations;
    if (root) {
      root = false;
      if (sol.status == SolveStatus::unbounded) {
        best.status = SolveStatus::unbounded;
        best.nodes = nodes;
        best.iterations = iterations;
        return best;
      }
    }
    if (sol.status != SolveStatus::optimal) {
      record(parent_bound);
      continue;
    }
    const double val = sgn * sol.objective;
    if (prunable(val)) {
      record(val);
      continue;
    }

    // Most fractional column among those of the highest priority present.
    int branch = -1;
    double most = 0.0;
    int level = 0;
    for (int k = 0; k < n_int; ++k) {
      const double v = sol.x[p.integer_columns[k]];
      const double frac = std::abs(v - std::round(v));
      if (frac <= opt.integrality_tol) continue;
      const int pr = p.branch_priority.empty() ? 0 : p.branch_priority[k];
      if (branch < 0 || pr > level || (pr == level && frac > most + 1e-12)) {
        most = frac;
        level = pr;
        branch = k;
      }
    }
    if (branch < 0) {
      try_incumbent(sol.x, fix);
      record(val);
      continue;
    }

    const int col = p.integer_columns[branch];
    auto zero = std::make_shared<detail::Fixing>(detail::Fixing{fix, col, 0});
    auto one = std::make_shared<detail::Fixing>(detail::Fixing{fix, col, 1});
    open.push({val, seq++, zero, std::make_shared<Basis>(simplex.basis())});
    dive_fix = one;
    dive_bound = val;
    diving = true;
    apply_fixings(one);
    record(val);
  }

  best.nodes = nodes;
  best.iterations = iterations;
  if (!have_incumbent) {
    best.status = SolveStatus::infeasible;
    return best;
  }
  double bound = incumbent;
  if (!open.empty()) bound = std::min(bound, open.top().bound);
  best.objective = lp.objective_value(best.x);
  best.bound = sgn * bound;
  best.gap = gap_of(bound, incumbent);
  best.status = best.gap <= opt.rel_gap ? SolveStatus::optimal : SolveStatus::incumbent_with_gap;
  best.max_violation = max_violation(lp, best.x, p.integer_columns);
  return best;
}

}  // namespace restore::milp
