// restore: plan repair orders, replay them under AC power flow and run the
// full placement x mode study.
//
// Exit codes: 0 success, 1 error, 2 plan found but optimality gap remains,
// 3 at least one AC period did not converge.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "restore/case_io.hpp"
#include "restore/metrics.hpp"
#include "restore/rip/rip.hpp"
#include "restore/rop.hpp"
#include "restore/scenarios.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace restore;

namespace {

enum ExitCode { kOk = 0, kError = 1, kGap = 2, kNotConverged = 3 };

struct RunConfig {
  std::string case_path;
  std::vector<std::string> scenarios;
  std::string damage;
  std::string mode = "base";
  std::string plan_path;
  int horizon = 0;  // 0: shortest horizon that fits the damage
  std::string out = ".";
  double gap = 1e-6;
  double tol = 1e-6;
  int jobs = 1;
  int repairs_per_period = 1;
  long node_budget = 1'000'000;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

template <typename F>
void write_stream(const fs::path& path, F&& fill) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  fill(out);
}

Network damaged_network(const RunConfig& cfg) {
  auto net = load_case(cfg.case_path);
  return apply_damage(net, load_damage(cfg.damage));
}

DerPlacement placement_of(const RunConfig& cfg, std::size_t k = 0) {
  if (cfg.scenarios.empty()) {
    DerPlacement none;
    none.name = "none";
    return none;
  }
  return load_scenario(cfg.scenarios.at(k)).placement;
}

TimeGrid time_grid(const RunConfig& cfg, const Network& net) {
  auto grid = TimeGrid::for_damage(damage_of(net).size(), cfg.repairs_per_period);
  if (cfg.horizon > 0) {
    if (cfg.horizon < grid.n_periods)
      throw Error("horizon " + std::to_string(cfg.horizon) + " is shorter than the " +
                  std::to_string(grid.n_periods) + " periods the damage needs");
    grid.n_periods = cfg.horizon;
  }
  return grid;
}

RestorationPlan plan_case(const RunConfig& cfg, const EffectiveCase& ec) {
  RopOptions ro;
  ro.repairs_per_period = cfg.repairs_per_period;
  const auto inst = build_rop(ec, damage_of(ec.network), time_grid(cfg, ec.network), ro);
  milp::MilpOptions mo;
  mo.rel_gap = cfg.gap;
  mo.node_budget = cfg.node_budget;
  return solve_rop(inst, mo);
}

rip::RipOptions rip_options(const RunConfig& cfg, int jobs) {
  rip::RipOptions o;
  o.tol = cfg.tol;
  o.jobs = jobs;
  return o;
}

json ens_json(const EnsReport& r) {
  return {{"ens_mwh", r.total_ens},           {"ens_der_mwh", r.ens_der},
          {"ens_no_der_mwh", r.ens_no_der},   {"total_mwh", r.total_energy},
          {"ens_fraction", r.ens_fraction}};
}

json reconnection_json(const ReconnectionReport& r) {
  return {{"t_der_hours", r.t_der}, {"t_0_hours", r.t_0}};
}

// Runs cells 0..n-1 on a bounded pool; results are indexed by cell, so
// completion order does not matter.
template <typename F>
void run_pool(std::size_t n, int jobs, F&& work) {
  std::atomic<std::size_t> next{0};
  auto loop = [&] {
    for (std::size_t i = next++; i < n; i = next++) work(i);
  };
  const int k = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  std::vector<std::thread> pool;
  for (int w = 1; w < k; ++w) pool.emplace_back(loop);
  loop();
  for (auto& t : pool) t.join();
}

int cmd_plan(const RunConfig& cfg) {
  const auto net = damaged_network(cfg);
  const auto ec = apply_der_mode(net, placement_of(cfg), der_mode_from_string(cfg.mode));
  const auto plan = plan_case(cfg, ec);
  fs::create_directories(cfg.out);
  write_json(fs::path(cfg.out) / "plan.json", plan_to_json(plan));
  auto ens = ens_json(energy_not_served(plan, ec));
  ens["status"] = milp::to_string(plan.status);
  ens["gap"] = plan.gap;
  write_json(fs::path(cfg.out) / "rop_ens.json", ens);
  std::cout << "ROP ENS " << ens["ens_mwh"].get<double>() << " MWh (" << milp::to_string(plan.status) << ")\n";
  return plan.status == milp::SolveStatus::incumbent_with_gap ? kGap : kOk;
}

RestorationPlan read_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open plan '" + path + "'");
  try {
    return plan_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error("plan '" + path + "': " + e.what());
  }
}

int cmd_simulate(const RunConfig& cfg) {
  const auto net = damaged_network(cfg);
  const auto ec = apply_der_mode(net, placement_of(cfg), der_mode_from_string(cfg.mode));
  const auto plan = read_plan(cfg.plan_path);
  if (const auto why = check_plan(plan, damage_of(ec.network), cfg.repairs_per_period); !why.empty())
    throw Error("plan does not match the damage: " + why);
  const auto res = rip::simulate_plan(ec, plan, rip_options(cfg, cfg.jobs));
  fs::create_directories(cfg.out);
  write_json(fs::path(cfg.out) / "rip_result.json", rip::rip_result_to_json(res, ec.network));
  write_stream(fs::path(cfg.out) / "served.csv", [&](std::ostream& os) { rip::write_served_csv(os, res); });
  json summary = ens_json(energy_not_served(res));
  summary["periods"] = json::array();
  for (std::size_t t = 0; t < res.periods.size(); ++t)
    summary["periods"].push_back(
        {{"period", t}, {"converged", res.periods[t].converged}, {"max_residual", res.residual[t].max()}});
  write_json(fs::path(cfg.out) / "residuals.json", summary);
  std::cout << "RIP ENS " << res.ens_mwh << " MWh" << (res.all_converged() ? "" : " (non-converged periods)")
            << '\n';
  return res.all_converged() ? kOk : kNotConverged;
}

int cmd_report(const RunConfig& cfg) {
  const auto net = damaged_network(cfg);
  const auto ec = apply_der_mode(net, placement_of(cfg), der_mode_from_string(cfg.mode));
  const auto plan = read_plan(cfg.plan_path);
  const auto ens = energy_not_served(plan, ec);
  const auto rec = reconnection_times(plan, ec);
  fs::create_directories(cfg.out);
  json j = ens_json(ens);
  j["reconnection"] = reconnection_json(rec);
  j["order"] = json::array();
  for (const auto& c : plan_order(plan)) j["order"].push_back(to_string(c));
  write_json(fs::path(cfg.out) / "report.json", j);
  write_stream(fs::path(cfg.out) / "reconnection.csv",
               [&](std::ostream& os) { write_reconnection_csv(os, {{cfg.mode, rec}}); });
  std::cout << "ENS " << ens.total_ens << " MWh, reconnection DER " << rec.t_der << " h, non-DER " << rec.t_0
            << " h\n";
  return kOk;
}

int cmd_sweep(const RunConfig& cfg) {
  if (cfg.scenarios.empty()) throw Error("sweep needs at least one --scenario placement");
  const auto net = damaged_network(cfg);
  const std::size_t np = cfg.scenarios.size();
  std::vector<DerPlacement> placements;
  for (std::size_t k = 0; k < np; ++k) placements.push_back(placement_of(cfg, k));

  struct PlanCell {
    std::optional<EffectiveCase> ec;
    std::optional<RestorationPlan> plan;
    std::string error;
  };
  std::vector<PlanCell> plans(np * 3);
  std::mutex log_mutex;
  run_pool(plans.size(), cfg.jobs, [&](std::size_t i) {
    auto& cell = plans[i];
    try {
      cell.ec = apply_der_mode(net, placements[i / 3], kAllModes[i % 3]);
      cell.plan = plan_case(cfg, *cell.ec);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    std::lock_guard lock(log_mutex);
    std::cerr << "plan " << placements[i / 3].name << '/' << to_string(kAllModes[i % 3])
              << (cell.error.empty() ? " done" : " failed: " + cell.error) << '\n';
  });

  // Replays: [placement][assumed][actual].
  struct RipCell {
    std::optional<rip::RipResult> result;
    std::string error;
  };
  std::vector<RipCell> rips(np * 9);
  run_pool(rips.size(), cfg.jobs, [&](std::size_t i) {
    const std::size_t p = i / 9, a = (i / 3) % 3, b = i % 3;
    auto& cell = rips[i];
    const auto& src = plans[p * 3 + a];
    const auto& act = plans[p * 3 + b];
    if (!src.plan || !act.ec) {
      cell.error = "plan unavailable";
      return;
    }
    try {
      cell.result = rip::simulate_plan(*act.ec, *src.plan, rip_options(cfg, 1));
      if (!cell.result->all_converged()) cell.error = "non-converged period";
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  });

  fs::create_directories(fs::path(cfg.out) / "plans");
  bool failed = false;
  std::vector<EnsSummaryRow> summary;
  std::vector<std::pair<std::string, ReconnectionReport>> reconnection;
  std::vector<std::pair<std::string, SensitivityGrid>> grids;
  json plot_ens = json::array(), plot_rec = json::array(), plot_group = json::array(), plot_sens = json::array();
  for (std::size_t p = 0; p < np; ++p) {
    SensitivityGrid grid;
    for (std::size_t m = 0; m < 3; ++m) {
      const auto& pc = plans[p * 3 + m];
      const std::string label = placements[p].name + "/" + to_string(kAllModes[m]);
      if (!pc.plan) {
        failed = true;
        std::cerr << "cell " << label << ": " << pc.error << '\n';
        plot_ens.push_back({{"placement", placements[p].name}, {"mode", to_string(kAllModes[m])}, {"ok", false}});
        continue;
      }
      write_json(fs::path(cfg.out) / "plans" / ("plan_" + placements[p].name + "_" + to_string(kAllModes[m]) + ".json"),
                 plan_to_json(*pc.plan));
      const auto rop_ens = energy_not_served(*pc.plan, *pc.ec);
      const auto& matched = rips[p * 9 + m * 3 + m];
      EnsSummaryRow row{placements[p].name, to_string(kAllModes[m]), rop_ens.total_ens, matched.result ? matched.result->ens_mwh : std::nan("")};
      summary.push_back(row);
      plot_ens.push_back({{"placement", row.placement}, {"mode", row.mode}, {"ok", true},
                      {"rop_ens_mwh", rop_ens.total_ens}, {"ens_fraction", rop_ens.ens_fraction},
                      {"total_mwh", rop_ens.total_energy}, {"status", milp::to_string(pc.plan->status)},
                      {"gap", pc.plan->gap}});
      plot_group.push_back({{"placement", row.placement}, {"mode", row.mode}, {"ens_der_mwh", rop_ens.ens_der},
                      {"ens_no_der_mwh", rop_ens.ens_no_der}});
      try {
        const auto rec = reconnection_times(*pc.plan, *pc.ec);
        reconnection.push_back({label, rec});
        plot_rec.push_back({{"placement", row.placement}, {"mode", row.mode}, {"t_der_hours", rec.t_der},
                        {"t_0_hours", rec.t_0}, {"difference_hours", rec.t_der - rec.t_0}});
      } catch (const std::exception& e) {
        failed = true;
        std::cerr << "cell " << label << ": " << e.what() << '\n';
      }
    }
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b) {
        const auto& rc = rips[p * 9 + a * 3 + b];
        auto& g = grid[a][b];
        g.ok = rc.error.empty();
        g.error = rc.error;
        g.ens_mwh = rc.result ? rc.result->ens_mwh : std::nan("");
        if (!g.ok) {
          failed = true;
          std::cerr << "replay " << placements[p].name << ' ' << to_string(kAllModes[a]) << " on "
                    << to_string(kAllModes[b]) << ": " << rc.error << '\n';
        }
        plot_sens.push_back({{"placement", placements[p].name}, {"assumed", to_string(kAllModes[a])},
                        {"actual", to_string(kAllModes[b])}, {"ens_mwh", g.ens_mwh}, {"ok", g.ok}});
      }
    grids.push_back({placements[p].name, grid});
  }

  const fs::path out(cfg.out);
  write_stream(out / "ens_summary.csv", [&](std::ostream& os) { write_ens_summary_csv(os, summary); });
  write_stream(out / "reconnection.csv", [&](std::ostream& os) { write_reconnection_csv(os, reconnection); });
  write_stream(out / "sensitivity.csv", [&](std::ostream& os) { write_sensitivity_csv(os, grids); });
  write_json(out / "plot_ens.json", plot_ens);
  write_json(out / "plot_reconnection.json", plot_rec);
  write_json(out / "plot_group_ens.json", plot_group);
  write_json(out / "plot_sensitivity.json", plot_sens);
  std::cout << "sweep: " << plans.size() << " plans, " << rips.size() << " replays"
            << (failed ? ", some cells failed" : "") << '\n';
  return failed ? kError : kOk;
}

void add_common(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--case", cfg.case_path, "case file (JSON)")->required()->envname("RESTORE_CASE");
  sub->add_option("--damage", cfg.damage, "damaged line ids: JSON file or comma list")->envname("RESTORE_DAMAGE");
  sub->add_option("--out", cfg.out, "output directory")->envname("RESTORE_OUT");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Repair ordering and AC replay for damaged distribution feeders"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto* plan = app.add_subcommand("plan", "solve the repair ordering problem");
  add_common(plan, cfg);
  plan->add_option("--scenario", cfg.scenarios, "DER placement or scenario file")->envname("RESTORE_SCENARIO");
  plan->add_option("--mode", cfg.mode, "base | home | community")->envname("RESTORE_MODE");
  plan->add_option("--horizon", cfg.horizon, "number of periods")->envname("RESTORE_HORIZON");
  plan->add_option("--gap", cfg.gap, "relative MIP gap")->envname("RESTORE_GAP");
  plan->add_option("--node-budget", cfg.node_budget, "branch-and-bound node limit")->envname("RESTORE_NODE_BUDGET");

  auto* sim = app.add_subcommand("simulate", "replay a plan under AC power flow");
  add_common(sim, cfg);
  sim->add_option("--scenario", cfg.scenarios, "DER placement or scenario file")->envname("RESTORE_SCENARIO");
  sim->add_option("--mode", cfg.mode, "actual DER mode")->envname("RESTORE_MODE");
  sim->add_option("--plan", cfg.plan_path, "plan.json")->required()->envname("RESTORE_PLAN");
  sim->add_option("--tol", cfg.tol, "AC residual tolerance")->envname("RESTORE_TOL");
  sim->add_option("--jobs", cfg.jobs, "worker threads")->envname("RESTORE_JOBS");

  auto* sweep = app.add_subcommand("sweep", "all placements x assumed modes x actual modes");
  add_common(sweep, cfg);
  sweep->add_option("--scenario", cfg.scenarios, "DER placement files")->required()->envname("RESTORE_SCENARIO");
  sweep->add_option("--horizon", cfg.horizon, "number of periods")->envname("RESTORE_HORIZON");
  sweep->add_option("--gap", cfg.gap, "relative MIP gap")->envname("RESTORE_GAP");
  sweep->add_option("--tol", cfg.tol, "AC residual tolerance")->envname("RESTORE_TOL");
  sweep->add_option("--jobs", cfg.jobs, "worker threads")->envname("RESTORE_JOBS");
  sweep->add_option("--node-budget", cfg.node_budget, "branch-and-bound node limit")->envname("RESTORE_NODE_BUDGET");

  auto* report = app.add_subcommand("report", "ENS and reconnection times of a plan");
  add_common(report, cfg);
  report->add_option("--scenario", cfg.scenarios, "DER placement or scenario file")->envname("RESTORE_SCENARIO");
  report->add_option("--mode", cfg.mode, "DER mode")->envname("RESTORE_MODE");
  report->add_option("--plan", cfg.plan_path, "plan.json")->required()->envname("RESTORE_PLAN");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kError;
  }

  try {
    if (*plan) return cmd_plan(cfg);
    if (*sim) return cmd_simulate(cfg);
    if (*sweep) return cmd_sweep(cfg);
    if (*report) return cmd_report(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kError;
  }
  return kError;
}
