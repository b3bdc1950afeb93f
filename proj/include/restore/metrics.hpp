#pragma once

// Performance measures of a restoration: energy not served and the average
// time until loads are reconnected to the substation, split between demands
// with and without a local DER.

#include <array>
#include <deque>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "restore/rip/rip.hpp"
#include "restore/rop.hpp"
#include "restore/scenarios.hpp"

namespace restore {

class MetricsError : public Error {
 public:
  using Error::Error;
};

struct EnsReport {
  double total_ens = 0.0;     // MWh
  double ens_der = 0.0;       // demands with a DER
  double ens_no_der = 0.0;    // demands without
  double total_energy = 0.0;  // MWh
  double ens_fraction = 0.0;
  std::vector<double> per_demand_ens;
};

/// ENS = sum_t sum_d (1 - x[d][t]) P_d dt. `demand_mw` and `has_der` are
/// per demand, `x` is [demand][period].
[[nodiscard]] inline EnsReport energy_not_served(const std::vector<std::vector<double>>& x,
                                                 const std::vector<double>& demand_mw,
                                                 const std::vector<char>& has_der, double step_hours) {
  if (x.size() != demand_mw.size() || has_der.size() != demand_mw.size())
    throw MetricsError("energy_not_served: " + std::to_string(x.size()) + " rows of x for " +
                       std::to_string(demand_mw.size()) + " demands");
  EnsReport r;
  r.per_demand_ens.assign(x.size(), 0.0);
  const std::size_t nt = x.empty() ? 0 : x.front().size();
  for (std::size_t d = 0; d < x.size(); ++d) {
    if (x[d].size() != nt) throw MetricsError("energy_not_served: ragged served-fraction matrix");
    for (double v : x[d]) {
      if (!(v >= 0.0 && v <= 1.0)) throw MetricsError("energy_not_served: served fraction outside [0, 1]");
      r.per_demand_ens[d] += (1.0 - v) * demand_mw[d] * step_hours;
    }
    r.total_energy += demand_mw[d] * step_hours * static_cast<double>(nt);
  }
  for (std::size_t d = 0; d < x.size(); ++d) {
    r.total_ens += r.per_demand_ens[d];
    (has_der[d] ? r.ens_der : r.ens_no_der) += r.per_demand_ens[d];
  }
  r.ens_fraction = r.total_energy > 0.0 ? r.total_ens / r.total_energy : 0.0;
  return r;
}

/// Demand sizes (MW) and DER flags of a case, in demand order.
[[nodiscard]] inline std::pair<std::vector<double>, std::vector<char>> demand_profile(const EffectiveCase& c) {
  std::pair<std::vector<double>, std::vector<char>> out;
  for (const auto& d : c.network.demands()) {
    out.first.push_back(d.p * c.network.base_mva());
    out.second.push_back(c.der_demand_ids.count(d.id) > 0);
  }
  return out;
}

/// ENS of a plan's served fractions; rows are matched to the case's demands
/// by id.
[[nodiscard]] inline EnsReport energy_not_served(const RestorationPlan& plan, const EffectiveCase& c) {
  const auto [mw, der] = demand_profile(c);
  const auto& demands = c.network.demands();
  if (plan.demand_ids.size() != demands.size() || plan.served_fraction.size() != demands.size())
    throw MetricsError("energy_not_served: plan covers " + std::to_string(plan.demand_ids.size()) +
                       " demands, case has " + std::to_string(demands.size()));
  std::vector<std::vector<double>> x(demands.size());
  for (std::size_t k = 0; k < plan.demand_ids.size(); ++k) {
    const auto d = c.network.demand_index(plan.demand_ids[k]);
    if (!d) throw MetricsError("energy_not_served: plan demand " + std::to_string(plan.demand_ids[k]) + " not in case");
    x[*d] = plan.served_fraction[k];
  }
  return energy_not_served(x, mw, der, plan.step_hours);
}

[[nodiscard]] inline EnsReport energy_not_served(const rip::RipResult& r) {
  return energy_not_served(r.served_fraction(), r.demand_p, r.has_der, r.step_hours);
}

struct ReconnectionReport {
  std::vector<DemandId> demand_ids;
  std::vector<BusId> buses;
  std::vector<char> has_der;
  std::vector<double> t_d;  // hours
  double t_der = 0.0;       // hours; 0 when the group is empty
  double t_0 = 0.0;
};

/// Time at which each demand first has a fully energized path to the
/// reference bus. Local service from DERs does not count.
[[nodiscard]] inline ReconnectionReport reconnection_times(const RestorationPlan& plan, const EffectiveCase& c) {
  const Network& net = c.network;
  const auto ref = net.reference_bus();
  if (!ref) throw MetricsError("reconnection_times: network has no reference bus");
  const auto nb = net.buses().size();
  std::vector<int> first(nb, -1);
  auto bus_on = [&](std::size_t b, int t) { return plan.energized({ComponentKind::bus, net.buses()[b].id}, t); };
  for (int t = 0; t < plan.n_periods; ++t) {
    if (!bus_on(*ref, t)) continue;
    std::vector<char> seen(nb, 0);
    std::deque<std::size_t> queue{*ref};
    seen[*ref] = 1;
    while (!queue.empty()) {
      const auto u = queue.front();
      queue.pop_front();
      if (first[u] < 0) first[u] = t;
      for (auto l : net.lines_at(u)) {
        const auto v = net.neighbor(l, u);
        if (seen[v] || !bus_on(v, t) || !plan.energized({ComponentKind::line, net.lines()[l].id}, t)) continue;
        seen[v] = 1;
        queue.push_back(v);
      }
    }
  }

  ReconnectionReport r;
  double sum_der = 0.0, sum_0 = 0.0;
  int n_der = 0, n_0 = 0;
  for (const auto& d : net.demands()) {
    int t = first[*net.bus_index(d.bus)];
    if (t >= 0) {
      const Component dc{ComponentKind::demand, d.id};
      if (const auto it = plan.energization.find(dc); it != plan.energization.end()) t = std::max(t, it->second);
      if (t >= plan.n_periods) t = -1;
    }
    if (t < 0) throw MetricsError("demand " + std::to_string(d.id) + " is never reconnected to the substation");
    const bool der = c.der_demand_ids.count(d.id) > 0;
    r.demand_ids.push_back(d.id);
    r.buses.push_back(d.bus);
    r.has_der.push_back(der);
    r.t_d.push_back(t * plan.step_hours);
  }
  for (std::size_t k = 0; k < r.t_d.size(); ++k) {
    if (r.has_der[k]) {
      sum_der += r.t_d[k];
      ++n_der;
    } else {
      sum_0 += r.t_d[k];
      ++n_0;
    }
  }
  r.t_der = n_der ? sum_der / n_der : 0.0;
  r.t_0 = n_0 ? sum_0 / n_0 : 0.0;
  return r;
}

struct SensitivityCell {
  double ens_mwh = 0.0;
  bool ok = false;
  std::string error;
};

/// grid[assumed][actual]: ENS of the plan made under the assumed mode when
/// replayed on the actual mode's case. Mode order is kAllModes.
using SensitivityGrid = std::array<std::array<SensitivityCell, 3>, 3>;

[[nodiscard]] inline SensitivityGrid sensitivity_matrix(const Network& net, const DerPlacement& placement,
                                                        const std::array<RestorationPlan, 3>& plans,
                                                        const rip::RipOptions& opt = {}) {
  SensitivityGrid grid;
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) {
      auto& cell = grid[a][b];
      try {
        const auto actual = apply_der_mode(net, placement, kAllModes[b]);
        const auto res = rip::simulate_plan(actual, plans[a], opt);
        cell.ens_mwh = res.ens_mwh;
        cell.ok = res.all_converged();
        if (!cell.ok) cell.error = "non-converged period";
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
    }
  return grid;
}

struct EnsSummaryRow {
  std::string placement, mode;
  double rop_ens = 0.0, rip_ens = 0.0;
};

inline void write_ens_summary_csv(std::ostream& os, const std::vector<EnsSummaryRow>& rows) {
  os.precision(10);
  os << "placement,mode,rop_ens,rip_ens\n";
  for (const auto& r : rows) os << r.placement << ',' << r.mode << ',' << r.rop_ens << ',' << r.rip_ens << '\n';
}

/// One block of rows per case; `label` is prepended as the first column.
inline void write_reconnection_csv(std::ostream& os, const std::vector<std::pair<std::string, ReconnectionReport>>& cases) {
  os.precision(10);
  os << "case,demand,bus,has_der,t_d\n";
  for (const auto& [label, r] : cases)
    for (std::size_t k = 0; k < r.demand_ids.size(); ++k)
      os << label << ',' << r.demand_ids[k] << ',' << r.buses[k] << ',' << int(r.has_der[k]) << ',' << r.t_d[k]
         << '\n';
}

inline void write_sensitivity_csv(std::ostream& os, const std::vector<std::pair<std::string, SensitivityGrid>>& grids) {
  os.precision(10);
  os << "placement,assumed,actual,ens_mwh,ok\n";
  for (const auto& [label, g] : grids)
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b)
        os << label << ',' << to_string(kAllModes[a]) << ',' << to_string(kAllModes[b]) << ',' << g[a][b].ens_mwh
           << ',' << int(g[a][b].ok) << '\n';
}

}  // namespace restore
