#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "restore/case_io.hpp"
#include "support.hpp"

using namespace restore;
using namespace restore::testing;

TEST(Network, BundledCaseLoads) {
  const auto net = load_case(data_path("ieee123_1ph.json"));
  EXPECT_EQ(net.buses().size(), 56u);
  EXPECT_EQ(net.lines().size(), 54u);
  EXPECT_EQ(net.demands().size(), 52u);
  ASSERT_TRUE(net.reference_bus().has_value());
  EXPECT_EQ(net.buses()[*net.reference_bus()].id, 1);
  // 3.49 MW over 19 one-hour periods is 66.31 MWh.
  EXPECT_NEAR(net.total_demand_p() * net.base_mva() * 19.0, 66.31, 1e-9);
  EXPECT_TRUE(validate(net).ok());
}

TEST(Network, MissingReactiveDemandDefaultsToPointNineFiveLagging) {
  const auto net = load_case(data_path("ieee123_1ph.json"));
  for (const auto& d : net.demands()) EXPECT_NEAR(d.q, d.p * std::tan(std::acos(0.95)), 1e-12);
}

TEST(Network, JsonRoundTripIsExact) {
  auto net = load_case(data_path("ieee123_1ph.json"));
  net = apply_damage(net, kBundledDamage);
  const auto again = network_from_json(network_to_json(net));
  EXPECT_TRUE(again == net);
}

TEST(Network, ValidationFlagsBadInput) {
  auto net = chain(3, {1.0, 1.0});
  auto lines = net.lines();
  lines[1].to_bus = 99;
  const Network bad(1.0, net.buses(), lines, net.generators(), net.demands());
  const auto report = validate(bad);
  EXPECT_FALSE(report.ok());
  EXPECT_NE(report.summary().find("line 2"), std::string::npos);
  EXPECT_THROW((void)require_valid(bad), ValidationError);
}

TEST(Network, ValidationRejectsDuplicateIdsAndMissingReference) {
  auto net = chain(3, {1.0, 1.0});
  auto buses = net.buses();
  buses[0].is_reference = false;
  EXPECT_FALSE(validate(Network(1.0, buses, net.lines(), net.generators(), net.demands())).ok());
  auto demands = net.demands();
  demands[1].id = demands[0].id;
  EXPECT_FALSE(validate(Network(1.0, net.buses(), net.lines(), net.generators(), demands)).ok());
}

TEST(Network, ParseErrorsAreReported) {
  EXPECT_THROW((void)parse_case("{not json"), ParseError);
  EXPECT_THROW((void)parse_case(R"({"base_mva": 1, "buses": []})"), ParseError);
  EXPECT_THROW((void)load_case("/nonexistent/case.json"), ParseError);
}

TEST(Network, ApplyDamageFlagsExactlyTheListedLines) {
  const auto net = apply_damage(load_case(data_path("ieee123_1ph.json")), kBundledDamage);
  auto ids = damaged_lines(net);
  std::sort(ids.begin(), ids.end());
  auto want = kBundledDamage;
  std::sort(want.begin(), want.end());
  EXPECT_EQ(ids, want);
  EXPECT_THROW((void)apply_damage(net, {999}), ValidationError);
}

TEST(Network, TimeGridFitsDamage) {
  EXPECT_EQ(TimeGrid::for_damage(18).n_periods, 19);
  EXPECT_EQ(TimeGrid::for_damage(0).n_periods, 1);
  EXPECT_EQ(TimeGrid::for_damage(5, 2).n_periods, 4);
}

TEST(Network, DamageListFromFileOrInline) {
  EXPECT_EQ(load_damage(data_path("damage.json")), kBundledDamage);
  EXPECT_EQ(load_damage("3, 1,2"), (std::vector<LineId>{3, 1, 2}));
  EXPECT_TRUE(load_damage("").empty());
  EXPECT_THROW((void)load_damage("2,x"), ParseError);
}

TEST(Network, SaveCaseWritesReadableFile) {
  const auto path = std::filesystem::temp_directory_path() / "restore_case_roundtrip.json";
  const auto net = chain(4, {0.5, 0.25, 0.125});
  save_case(net, path.string());
  EXPECT_TRUE(load_case(path.string()) == net);
  std::filesystem::remove(path);
}
