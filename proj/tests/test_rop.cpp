#include <gtest/gtest.h>

#include <random>

#include "restore/rop.hpp"
#include "support.hpp"

using namespace restore;
using namespace restore::testing;

namespace {

EffectiveCase as_case(const Network& net) { return EffectiveCase{net, DerMode::base, {}, {}}; }

std::vector<LineId> line_order(const RestorationPlan& plan) {
  std::vector<LineId> out;
  for (const auto& c : plan_order(plan)) out.push_back(c.id);
  return out;
}

}  // namespace

TEST(Rop, ChainRepairsFromTheSubstationOutward) {
  auto net = apply_damage(chain(3, {1.0, 2.0}), {1, 2});
  const auto inst = build_rop(as_case(net));
  EXPECT_EQ(inst.time.n_periods, 3);
  const auto plan = solve_rop(inst);
  EXPECT_EQ(line_order(plan), (std::vector<LineId>{1, 2}));
  // Period 0 nothing, period 1 bus 2, period 2 both: 0 + 1 + 3.
  EXPECT_NEAR(plan.objective_mwh, 4.0, 1e-9);
  EXPECT_TRUE(check_plan(plan, inst.damage).empty());
}

TEST(Rop, LargerLoadFirstOnAStar) {
  // Two branches off the substation; the heavier one is repaired first.
  const Network net(1.0, {make_bus(1, true), make_bus(2), make_bus(3)},
                    {make_line(1, 1, 2, 0.01, 10.0), make_line(2, 1, 3, 0.01, 10.0)}, {make_gen(1, 1, -10, 10)},
                    {make_demand(1, 2, 0.5), make_demand(2, 3, 1.5)});
  const auto plan = solve_rop(build_rop(as_case(apply_damage(net, {1, 2}))));
  EXPECT_EQ(line_order(plan), (std::vector<LineId>{2, 1}));
  EXPECT_NEAR(plan.objective_mwh, 1.5 + 2.0, 1e-9);
}

TEST(Rop, MatchesBruteForceOracleOnRandomRadialNetworks) {
  std::mt19937 rng(424242);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 4 + trial % 7;
    const auto net = random_radial(rng, n, 1 + trial % 3);
    const auto want = brute_force_order(net);
    const auto plan = solve_rop(build_rop(as_case(net)));
    ASSERT_EQ(plan.status, milp::SolveStatus::optimal) << "trial " << trial;
    EXPECT_NEAR(plan.objective_mwh, want.served_mwh, 1e-6 * std::max(1.0, want.served_mwh)) << "trial " << trial;
  }
}

TEST(Rop, StrengtheningKeepsTheOptimum) {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    const auto net = random_radial(rng, 5 + trial % 6, 3);
    RopOptions plain;
    plain.strengthen = false;
    RopOptions wide;
    wide.group_cut_limit = 100000;
    const auto a = solve_rop(build_rop(as_case(net), plain));
    const auto b = solve_rop(build_rop(as_case(net)));
    const auto c = solve_rop(build_rop(as_case(net), wide));
    EXPECT_NEAR(a.objective_mwh, b.objective_mwh, 1e-6) << "trial " << trial;
    EXPECT_NEAR(a.objective_mwh, c.objective_mwh, 1e-6) << "trial " << trial;
  }
}

TEST(Rop, PlanInvariantsOnRandomNetworks) {
  std::mt19937 rng(5150);
  for (int trial = 0; trial < 20; ++trial) {
    const auto net = random_radial(rng, 6 + trial % 5, 3);
    const auto inst = build_rop(as_case(net));
    const auto sol = milp::solve_milp(inst.problem);
    ASSERT_EQ(sol.status, milp::SolveStatus::optimal);
    const int T = inst.time.n_periods;
    for (std::size_t k = 0; k < inst.components.size(); ++k)
      for (int t = 1; t < T; ++t) EXPECT_GE(sol.x[inst.z_col[t][k]], sol.x[inst.z_col[t - 1][k]] - 1e-9);
    for (int t = 0; t < T; ++t) {
      double on = 0.0;
      for (std::size_t k = 0; k < inst.components.size(); ++k) on += sol.x[inst.z_col[t][k]];
      EXPECT_LE(on, t + 1e-9);
      for (std::size_t d = 0; d < net.demands().size(); ++d) {
        EXPECT_GE(sol.x[inst.x_col[t][d]], -1e-9);
        EXPECT_LE(sol.x[inst.x_col[t][d]], 1.0 + 1e-9);
      }
      for (std::size_t l = 0; l < net.lines().size(); ++l) {
        const auto pos = std::find(inst.components.begin(), inst.components.end(),
                                   Component{ComponentKind::line, net.lines()[l].id});
        if (pos == inst.components.end()) continue;
        if (sol.x[inst.z_col[t][pos - inst.components.begin()]] < 0.5)
          EXPECT_NEAR(sol.x[inst.pl_col[t][l]], 0.0, 1e-9);
      }
    }
    for (std::size_t k = 0; k < inst.components.size(); ++k) EXPECT_NEAR(sol.x[inst.z_col[T - 1][k]], 1.0, 1e-9);
    const auto plan = solve_rop(inst);
    EXPECT_EQ(check_plan(plan, inst.damage), "");
  }
}

TEST(Rop, RepairsPerPeriodShortensTheHorizon) {
  auto net = apply_damage(chain(5, {1, 1, 1, 1}), {1, 2, 3, 4});
  RopOptions two;
  two.repairs_per_period = 2;
  const auto inst = build_rop(as_case(net), two);
  EXPECT_EQ(inst.time.n_periods, 3);
  const auto plan = solve_rop(inst);
  EXPECT_TRUE(check_plan(plan, inst.damage, 2).empty());
  EXPECT_NEAR(plan.objective_mwh, 2.0 + 4.0, 1e-9);
}

TEST(Rop, HorizonTooShortIsRejected) {
  const auto net = apply_damage(chain(4, {1, 1, 1}), {1, 2, 3});
  EXPECT_THROW((void)build_rop(as_case(net), damage_of(net), TimeGrid{3, 1.0}), RopError);
  EXPECT_NO_THROW((void)build_rop(as_case(net), damage_of(net), TimeGrid{6, 1.0}));
  DamageSet unknown;
  unknown.lines = {77};
  EXPECT_THROW((void)build_rop(as_case(net), unknown, TimeGrid{2, 1.0}), RopError);
}

TEST(Rop, LongerHorizonNeverServesLessPerPeriod) {
  const auto net = apply_damage(chain(4, {1, 2, 3}), {1, 3});
  const auto a = solve_rop(build_rop(as_case(net), damage_of(net), TimeGrid{3, 1.0}));
  const auto b = solve_rop(build_rop(as_case(net), damage_of(net), TimeGrid{5, 1.0}));
  // Two extra periods at full service.
  EXPECT_NEAR(b.objective_mwh, a.objective_mwh + 2 * 6.0, 1e-9);
}

TEST(Rop, EmptyDamageServesEverythingInOnePeriod) {
  const auto net = chain(3, {0.4, 0.6});
  const auto plan = solve_rop(build_rop(as_case(net)));
  EXPECT_EQ(plan.n_periods, 1);
  EXPECT_NEAR(plan.objective_mwh, 1.0, 1e-9);
  EXPECT_TRUE(plan.energization.empty());
}

TEST(Rop, BigMIsTheSumOfAngleBounds) {
  const auto net = chain(4, {1, 1, 1});
  EXPECT_NEAR(compute_big_m(net), 3 * 0.52, 1e-12);
  const auto inst = build_rop(as_case(net));
  EXPECT_NEAR(inst.big_m_theta, 3 * 0.52, 1e-12);
}

TEST(Rop, PlanJsonRoundTrip) {
  std::mt19937 rng(8);
  const auto net = random_radial(rng, 8, 3);
  const auto plan = solve_rop(build_rop(as_case(net)));
  const auto back = plan_from_json(plan_to_json(plan));
  EXPECT_EQ(back.schedule, plan.schedule);
  EXPECT_EQ(back.energization, plan.energization);
  EXPECT_EQ(back.demand_ids, plan.demand_ids);
  EXPECT_EQ(back.served_fraction, plan.served_fraction);
  EXPECT_EQ(back.objective_mwh, plan.objective_mwh);
  EXPECT_THROW((void)plan_from_json(nlohmann::json::parse(R"({"schedule": [["pipe:3"]]})")), RopError);
}

TEST(Rop, CheckPlanCatchesBrokenSchedules) {
  const auto net = apply_damage(chain(3, {1, 1}), {1, 2});
  const auto inst = build_rop(as_case(net));
  auto plan = solve_rop(inst);
  auto early = plan;
  early.schedule = {{}, {{ComponentKind::line, 1}, {ComponentKind::line, 2}}, {}};
  early.energization = {{{ComponentKind::line, 1}, 1}, {{ComponentKind::line, 2}, 1}};
  EXPECT_NE(check_plan(early, inst.damage).find("budget"), std::string::npos);
  auto at_zero = plan;
  at_zero.energization.begin()->second = 0;
  EXPECT_FALSE(check_plan(at_zero, inst.damage).empty());
}
