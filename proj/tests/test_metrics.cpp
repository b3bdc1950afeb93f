#include <gtest/gtest.h>

#include <sstream>

#include "restore/case_io.hpp"
#include "restore/metrics.hpp"
#include "support.hpp"

using namespace restore;
using namespace restore::testing;

namespace {

EffectiveCase as_case(const Network& net, std::set<DemandId> der = {}) {
  return EffectiveCase{net, DerMode::base, {}, std::move(der)};
}

RestorationPlan manual_plan(int periods, const std::vector<std::pair<LineId, int>>& lines = {}) {
  RestorationPlan p;
  p.n_periods = periods;
  p.schedule.assign(periods, {});
  for (auto [id, t] : lines) {
    p.energization[{ComponentKind::line, id}] = t;
    p.schedule[t].push_back({ComponentKind::line, id});
  }
  return p;
}

}  // namespace

TEST(Ens, TwoDemandsTwoPeriods) {
  const auto r = energy_not_served({{1, 1}, {0, 1}}, {1.0, 2.0}, {0, 1}, 1.0);
  EXPECT_EQ(r.total_ens, 2.0);
  EXPECT_EQ(r.ens_der, 2.0);
  EXPECT_EQ(r.ens_no_der, 0.0);
  EXPECT_EQ(r.total_energy, 6.0);
  EXPECT_DOUBLE_EQ(r.ens_fraction, 1.0 / 3.0);
  EXPECT_EQ(r.per_demand_ens, (std::vector<double>{0.0, 2.0}));
}

TEST(Ens, FullServiceIsZero) {
  const auto r = energy_not_served({{1, 1, 1}, {1, 1, 1}}, {0.3, 0.7}, {1, 0}, 0.5);
  EXPECT_EQ(r.total_ens, 0.0);
  EXPECT_EQ(r.ens_fraction, 0.0);
}

TEST(Ens, NothingServedOnBundledCaseIsTotalDemand) {
  const auto net = load_case(data_path("ieee123_1ph.json"));
  const auto c = as_case(net);
  const auto [mw, der] = demand_profile(c);
  const std::vector<std::vector<double>> x(mw.size(), std::vector<double>(19, 0.0));
  const auto r = energy_not_served(x, mw, der, 1.0);
  EXPECT_NEAR(r.total_ens, 66.31, 1e-9);
  EXPECT_NEAR(r.ens_fraction, 1.0, 1e-15);
}

TEST(Ens, GroupsAndDemandsSumToTotal) {
  const auto r = energy_not_served({{0.5, 0.25}, {0.1, 0.0}, {1.0, 0.75}}, {0.2, 0.4, 1.0}, {1, 0, 1}, 2.0);
  double sum = 0.0;
  for (double e : r.per_demand_ens) sum += e;
  EXPECT_NEAR(sum, r.total_ens, 1e-15);
  EXPECT_NEAR(r.ens_der + r.ens_no_der, r.total_ens, 1e-15);
  // 0.2*2*(0.5+0.75) + 0.4*2*(0.9+1.0) + 1.0*2*(0+0.25)
  EXPECT_NEAR(r.total_ens, 0.5 + 1.52 + 0.5, 1e-12);
}

TEST(Ens, RejectsBadInput) {
  EXPECT_THROW((void)energy_not_served({{1.0}}, {1.0, 2.0}, {0, 0}, 1.0), MetricsError);
  EXPECT_THROW((void)energy_not_served({{1.0}, {1.0, 1.0}}, {1.0, 2.0}, {0, 0}, 1.0), MetricsError);
  EXPECT_THROW((void)energy_not_served({{1.5}}, {1.0}, {0}, 1.0), MetricsError);
  EXPECT_THROW((void)energy_not_served({{-0.1}}, {1.0}, {0}, 1.0), MetricsError);
}

TEST(Ens, PlanRowsAreMatchedById) {
  const auto net = chain(3, {1.0, 2.0});
  auto plan = manual_plan(2);
  plan.demand_ids = {2, 1};
  plan.served_fraction = {{0.0, 1.0}, {1.0, 1.0}};
  const auto r = energy_not_served(plan, as_case(net));
  EXPECT_EQ(r.per_demand_ens, (std::vector<double>{0.0, 2.0}));
  plan.demand_ids = {2, 7};
  EXPECT_THROW((void)energy_not_served(plan, as_case(net)), MetricsError);
}

TEST(Reconnection, ThreeBusChain) {
  const auto net = apply_damage(chain(3, {1.0, 1.0}), {1, 2});
  const auto r = reconnection_times(manual_plan(3, {{1, 1}, {2, 2}}), as_case(net, {2}));
  EXPECT_EQ(r.t_d, (std::vector<double>{1.0, 2.0}));
  EXPECT_EQ(r.t_der, 2.0);
  EXPECT_EQ(r.t_0, 1.0);
}

TEST(Reconnection, UndamagedNetworkIsConnectedAtZero) {
  const auto net = chain(4, {1.0, 1.0, 1.0});
  const auto r = reconnection_times(manual_plan(1), as_case(net));
  EXPECT_EQ(r.t_d, (std::vector<double>{0.0, 0.0, 0.0}));
  EXPECT_EQ(r.t_der, 0.0);
}

TEST(Reconnection, LocalServiceDoesNotCount) {
  // Bus 3 has a DER and lies behind the damaged line 2: it is reconnected
  // only when the line returns, whatever it serves locally.
  auto net = apply_damage(chain(3, {1.0, 1.0}), {2});
  auto gens = net.generators();
  gens.push_back(make_gen(2, 3, 0.0, 5.0, 1.0, GeneratorKind::utility_der));
  net = Network(1.0, net.buses(), net.lines(), gens, net.demands());
  auto plan = manual_plan(4, {{2, 3}});
  plan.step_hours = 0.5;
  const auto r = reconnection_times(plan, as_case(net, {2}));
  EXPECT_EQ(r.t_d, (std::vector<double>{0.0, 1.5}));
}

TEST(Reconnection, GroupAveragesRecomputeFromPerDemandValues) {
  const auto net = apply_damage(chain(5, {1, 1, 1, 1}), {1, 3});
  const auto r = reconnection_times(manual_plan(3, {{3, 1}, {1, 2}}), as_case(net, {1, 4}));
  EXPECT_EQ(r.t_d, (std::vector<double>{2.0, 2.0, 2.0, 2.0}));
  double der = 0.0, other = 0.0;
  for (std::size_t k = 0; k < r.t_d.size(); ++k) (r.has_der[k] ? der : other) += r.t_d[k];
  EXPECT_EQ(r.t_der, der / 2);
  EXPECT_EQ(r.t_0, other / 2);
}

TEST(Reconnection, IncompletePlanIsReported) {
  const auto net = apply_damage(chain(3, {1.0, 1.0}), {2});
  auto plan = manual_plan(2, {{2, 1}});
  plan.energization.begin()->second = 5;
  EXPECT_THROW((void)reconnection_times(plan, as_case(net)), MetricsError);
}

TEST(Sensitivity, ZeroLoadGridIsAllZero) {
  const auto net = apply_damage(chain(3, {0.0, 0.0}), {2});
  DerPlacement placement;
  placement.der_nodes = {3};
  const auto plan = manual_plan(2, {{2, 1}});
  const auto grid = sensitivity_matrix(net, placement, {plan, plan, plan});
  for (const auto& row : grid)
    for (const auto& cell : row) {
      EXPECT_TRUE(cell.ok) << cell.error;
      EXPECT_EQ(cell.ens_mwh, 0.0);
    }
}

TEST(Sensitivity, FailuresAreFlaggedPerCell) {
  const auto net = apply_damage(chain(3, {0.1, 0.1}), {2});
  DerPlacement placement;
  placement.der_nodes = {3};
  const auto good = manual_plan(2, {{2, 1}});
  const auto broken = manual_plan(2);  // misses the damaged line
  const auto grid = sensitivity_matrix(net, placement, {good, broken, good});
  EXPECT_TRUE(grid[0][0].ok);
  for (const auto& cell : grid[1]) {
    EXPECT_FALSE(cell.ok);
    EXPECT_FALSE(cell.error.empty());
  }
}

TEST(Csv, Layouts) {
  std::ostringstream a, b, c;
  write_ens_summary_csv(a, {{"uniform", "base", 1.5, 2.5}});
  EXPECT_EQ(a.str(), "placement,mode,rop_ens,rip_ens\nuniform,base,1.5,2.5\n");
  ReconnectionReport r;
  r.demand_ids = {4};
  r.buses = {9};
  r.has_der = {1};
  r.t_d = {3.0};
  write_reconnection_csv(b, {{"clustered_home", r}});
  EXPECT_EQ(b.str(), "case,demand,bus,has_der,t_d\nclustered_home,4,9,1,3\n");
  SensitivityGrid g{};
  g[1][2] = {0.25, true, ""};
  write_sensitivity_csv(c, {{"uniform", g}});
  const auto text = c.str();
  EXPECT_NE(text.find("uniform,home,community,0.25,1\n"), std::string::npos);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 10);
}
