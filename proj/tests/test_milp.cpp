#include <gtest/gtest.h>

#include <random>

#include "restore/milp/backend.hpp"

using namespace restore::milp;

namespace {

/// Exhaustive optimum of a pure binary problem.
std::optional<double> enumerate_binary(const MilpProblem& p) {
  const auto& lp = p.lp;
  const int n = lp.num_cols();
  const double sgn = lp.sense == Sense::maximize ? -1.0 : 1.0;
  std::optional<double> best;
  std::vector<double> x(n);
  for (long mask = 0; mask < (1L << n); ++mask) {
    bool fits = true;
    for (int j = 0; j < n; ++j) {
      x[j] = (mask >> j) & 1;
      if (x[j] < lp.col_lower[j] || x[j] > lp.col_upper[j]) fits = false;
    }
    if (!fits) continue;
    const auto act = lp.row_activity(x);
    for (int i = 0; i < lp.num_rows() && fits; ++i)
      fits = act[i] >= lp.row_lower[i] - 1e-9 && act[i] <= lp.row_upper[i] + 1e-9;
    if (!fits) continue;
    const double v = lp.objective_value(x);
    if (!best || sgn * v < sgn * *best) best = v;
  }
  return best;
}

MilpProblem random_binary(std::mt19937& rng, int n, int m) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MilpProblem p;
  p.lp.sense = u(rng) < 0 ? Sense::minimize : Sense::maximize;
  for (int j = 0; j < n; ++j) {
    p.lp.add_column("b" + std::to_string(j), 0, 1, std::round(10 * u(rng)) / 2);
    p.integer_columns.push_back(j);
  }
  for (int i = 0; i < m; ++i) {
    std::vector<std::pair<int, double>> terms;
    double pos = 0.0;
    for (int j = 0; j < n; ++j)
      if (u(rng) < 0.4) {
        const double a = std::round(6 * u(rng));
        terms.push_back({j, a});
        pos += std::max(a, 0.0);
      }
    const double rhs = std::round(pos * (u(rng) + 1.0) / 2.0 - 1.0);
    if (u(rng) < 0.7) p.lp.add_row("c", -kInf, rhs, terms);
    else p.lp.add_row("c", rhs - 2, rhs, terms);
  }
  return p;
}

}  // namespace

TEST(BranchAndBound, MatchesEnumerationOnRandomBinaryProblems) {
  std::mt19937 rng(99);
  int feasible = 0, infeasible = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_binary(rng, 3 + trial % 8, 1 + trial % 4);
    const auto want = enumerate_binary(p);
    MilpOptions opt;
    opt.rel_gap = 1e-9;
    const auto got = solve_milp(p, opt);
    if (!want) {
      EXPECT_EQ(got.status, SolveStatus::infeasible) << "trial " << trial;
      ++infeasible;
      continue;
    }
    ++feasible;
    ASSERT_EQ(got.status, SolveStatus::optimal) << "trial " << trial;
    EXPECT_NEAR(got.objective, *want, 1e-7) << "trial " << trial;
    EXPECT_LE(max_violation(p.lp, got.x, p.integer_columns), 1e-7);
  }
  EXPECT_GT(feasible, 100);
  EXPECT_GT(infeasible, 0);
}

TEST(BranchAndBound, MixedKnapsackWithContinuousSlack) {
  // max 5a + 4b + 3c + y st 2a + 3b + c + y <= 4.5, y <= 2 -> a = c = 1, y = 1.5.
  MilpProblem p;
  p.lp.sense = Sense::maximize;
  const int a = p.lp.add_column("a", 0, 1, 5);
  const int b = p.lp.add_column("b", 0, 1, 4);
  const int c = p.lp.add_column("c", 0, 1, 3);
  const int y = p.lp.add_column("y", 0, 2, 1);
  p.lp.add_row("cap", -kInf, 4.5, {{a, 2}, {b, 3}, {c, 1}, {y, 1}});
  p.integer_columns = {a, b, c};
  const auto s = solve_milp(p);
  ASSERT_EQ(s.status, SolveStatus::optimal);
  EXPECT_NEAR(s.objective, 9.5, 1e-9);
  EXPECT_NEAR(s.x[y], 1.5, 1e-9);
  EXPECT_NEAR(s.bound, 9.5, 1e-6);
}

TEST(BranchAndBound, StatusesForDegenerateInputs) {
  MilpProblem infeasible;
  const int x = infeasible.lp.add_column("x", 0, 1, 1);
  infeasible.lp.add_row("r", 0.3, 0.7, {{x, 1}});
  infeasible.integer_columns = {x};
  EXPECT_EQ(solve_milp(infeasible).status, SolveStatus::infeasible);

  MilpProblem unbounded;
  unbounded.lp.sense = Sense::maximize;
  const int z = unbounded.lp.add_column("z", 0, 1, 1);
  unbounded.lp.add_column("w", 0, kInf, 1);
  unbounded.integer_columns = {z};
  EXPECT_EQ(solve_milp(unbounded).status, SolveStatus::unbounded);

  MilpProblem not_binary;
  not_binary.lp.add_column("q", 0, 3, 1);
  not_binary.integer_columns = {0};
  EXPECT_THROW((void)solve_milp(not_binary), SolverError);
  not_binary.lp.col_upper[0] = 1;
  not_binary.branch_priority = {1, 2};
  EXPECT_THROW((void)solve_milp(not_binary), SolverError);
}

TEST(BranchAndBound, TraceBoundsAreMonotoneAndBracketOptimum) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_binary(rng, 10, 3);
    const auto want = enumerate_binary(p);
    if (!want) continue;
    MilpTrace trace;
    const auto s = solve_milp(p, {}, &trace);
    ASSERT_EQ(s.status, SolveStatus::optimal);
    ASSERT_EQ(trace.global_bound.size(), trace.incumbent.size());
    const double sgn = p.lp.sense == Sense::maximize ? -1.0 : 1.0;
    for (std::size_t k = 0; k < trace.global_bound.size(); ++k) {
      EXPECT_LE(sgn * trace.global_bound[k], sgn * *want + 1e-7);
      if (std::isfinite(trace.incumbent[k])) EXPECT_GE(sgn * trace.incumbent[k], sgn * *want - 1e-7);
      if (k > 0) EXPECT_LE(sgn * trace.incumbent[k], sgn * trace.incumbent[k - 1] + 1e-12);
    }
  }
}

TEST(BranchAndBound, NodeBudgetYieldsIncumbentWithGapOrThrows) {
  // Many symmetric items with a fractional capacity need a deep search.
  MilpProblem p;
  p.lp.sense = Sense::maximize;
  std::vector<std::pair<int, double>> terms;
  for (int j = 0; j < 16; ++j) {
    p.integer_columns.push_back(p.lp.add_column("b" + std::to_string(j), 0, 1, 10 + j % 3));
    terms.push_back({j, 7.0 + j % 5});
  }
  p.lp.add_row("cap", -kInf, 40.5, terms);
  const auto full = solve_milp(p);
  ASSERT_EQ(full.status, SolveStatus::optimal);
  ASSERT_GT(full.nodes, 3);
  MilpOptions opt;
  opt.node_budget = 1;
  EXPECT_THROW((void)solve_milp(p, opt), SolverError);
  int with_gap = 0;
  for (long budget = 2; budget < full.nodes; ++budget) {
    opt.node_budget = budget;
    Solution s;
    try {
      s = solve_milp(p, opt);
    } catch (const SolverError&) {
      continue;
    }
    ASSERT_TRUE(s.has_point());
    EXPECT_LE(s.objective, full.objective + 1e-9);
    EXPECT_GE(s.bound, full.objective - 1e-9);
    if (s.status == SolveStatus::incumbent_with_gap) {
      ++with_gap;
      EXPECT_GT(s.gap, opt.rel_gap);
    }
  }
  EXPECT_GT(with_gap, 0);
}

TEST(BranchAndBound, PrioritiesDoNotChangeTheOptimum) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    auto p = random_binary(rng, 9, 3);
    const auto plain = solve_milp(p);
    for (int k = 0; k < static_cast<int>(p.integer_columns.size()); ++k) p.branch_priority.push_back(k % 3);
    const auto prio = solve_milp(p);
    ASSERT_EQ(plain.status, prio.status);
    if (plain.has_point()) EXPECT_NEAR(plain.objective, prio.objective, 1e-7);
  }
}

TEST(BranchAndBound, ProgressCallbackFires) {
  std::mt19937 rng(5);
  const auto p = random_binary(rng, 10, 2);
  MilpOptions opt;
  opt.progress_interval = 1;
  long calls = 0;
  opt.progress = [&](long nodes, double, double) { calls = std::max(calls, nodes); };
  const auto s = solve_milp(p, opt);
  EXPECT_EQ(calls, s.nodes);
}

TEST(Backend, RegistryResolvesBuiltinAndCustom) {
  EXPECT_EQ(make_backend()->name(), "builtin");
  EXPECT_THROW((void)make_backend("nonexistent"), SolverError);

  struct Fixed final : MilpBackend {
    std::string name() const override { return "fixed"; }
    Solution solve(const MilpProblem&, const MilpOptions&) override {
      Solution s;
      s.status = SolveStatus::infeasible;
      return s;
    }
  };
  register_backend("fixed", [] { return std::make_unique<Fixed>(); });
  MilpProblem p;
  p.lp.add_column("x", 0, 1, 1);
  EXPECT_EQ(make_backend("fixed")->solve(p, {}).status, SolveStatus::infeasible);
  EXPECT_EQ(make_backend("builtin")->solve(p, {}).status, SolveStatus::optimal);
}
