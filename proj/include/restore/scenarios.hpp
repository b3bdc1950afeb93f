#pragma once

// DER operating modes. A base Network plus a DER placement becomes an
// EffectiveCase: DERs ignored (base), netted against their own node's load
// (home microgrid) or dispatched as generators (community microgrid).

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "restore/network.hpp"

namespace restore {

class ScenarioError : public Error {
 public:
  using Error::Error;
};

enum class DerMode { base, home_microgrid, community_microgrid };

[[nodiscard]] inline const char* to_string(DerMode m) {
  switch (m) {
    case DerMode::base: return "base";
    case DerMode::home_microgrid: return "home";
    case DerMode::community_microgrid: return "community";
  }
  return "?";
}

[[nodiscard]] inline DerMode der_mode_from_string(const std::string& s) {
  if (s == "base") return DerMode::base;
  if (s == "home" || s == "home_microgrid") return DerMode::home_microgrid;
  if (s == "community" || s == "community_microgrid") return DerMode::community_microgrid;
  throw ScenarioError("unknown DER mode '" + s + "'");
}

inline constexpr DerMode kAllModes[] = {DerMode::base, DerMode::home_microgrid,
                                        DerMode::community_microgrid};

/// Where DERs sit and how large each one is. `der_nodes` is a multiset: a
/// bus listed twice hosts two DERs. Ratings are in MW / MVAr per DER.
struct DerPlacement {
  std::string name = "custom";
  std::vector<BusId> der_nodes;
  double p_max = 0.075;
  double q_min = -0.05;
  double q_max = 0.05;

  /// Number of DER instances per bus.
  [[nodiscard]] std::map<BusId, int> counts() const {
    std::map<BusId, int> c;
    for (BusId b : der_nodes) ++c[b];
    return c;
  }
};

struct EffectiveCase {
  Network network;
  DerMode mode = DerMode::base;
  DerPlacement placement;
  std::set<DemandId> der_demand_ids;  // demands at buses hosting a DER
};

/// Net load of a home with its own DER: the DER offsets local demand but
/// never below 1% of the original load.
[[nodiscard]] inline double home_microgrid_load(double d_org, double p_der) {
  if (d_org < 0.0 || p_der < 0.0) throw ScenarioError("home_microgrid_load: negative input");
  return std::max(0.01 * d_org, d_org - p_der);
}

/// Transforms `net` under one DER mode. Rejects inputs that already carry
/// DER effects (customer DER generators or has_der flags), so a transformed
/// network cannot be transformed again.
[[nodiscard]] inline EffectiveCase apply_der_mode(const Network& net, const DerPlacement& placement,
                                                  DerMode mode) {
  for (BusId b : placement.der_nodes)
    if (!net.bus_index(b)) throw ScenarioError("DER placement: unknown bus id " + std::to_string(b));
  if (placement.p_max < 0.0) throw ScenarioError("DER placement: negative p_max");
  if (placement.q_min > placement.q_max) throw ScenarioError("DER placement: q_min exceeds q_max");
  for (const auto& g : net.generators())
    if (g.kind == GeneratorKind::customer_der)
      throw ScenarioError("network already contains customer DER generators");
  for (const auto& d : net.demands())
    if (d.has_der) throw ScenarioError("network already carries DER flags");

  const auto counts = placement.counts();
  EffectiveCase out;
  out.mode = mode;
  out.placement = placement;
  for (const auto& d : net.demands())
    if (counts.count(d.bus)) out.der_demand_ids.insert(d.id);

  if (mode == DerMode::base) {
    out.network = net;
    return out;
  }

  const double base = net.base_mva();
  auto demands = net.demands();
  auto gens = net.generators();
  for (auto& d : demands) d.has_der = out.der_demand_ids.count(d.id) > 0;

  if (mode == DerMode::home_microgrid) {
    // Stacked capacity per bus, consumed by that bus's demands in order.
    std::map<BusId, double> remaining;
    for (auto [bus, n] : counts) remaining[bus] = n * placement.p_max / base;
    for (auto& d : demands) {
      auto it = remaining.find(d.bus);
      if (it == remaining.end()) continue;
      const double netted = home_microgrid_load(d.p, it->second);
      it->second = std::max(0.0, it->second - (d.p - netted));
      if (d.p > 0.0) d.q *= netted / d.p;
      d.p = netted;
    }
  } else {
    GenId next = 1;
    for (const auto& g : gens) next = std::max(next, g.id + 1);
    for (BusId b : placement.der_nodes) {
      Generator g;
      g.id = next++;
      g.bus = b;
      g.p_min = 0.0;
      g.p_max = placement.p_max / base;
      g.q_min = placement.q_min / base;
      g.q_max = placement.q_max / base;
      g.kind = GeneratorKind::customer_der;
      gens.push_back(g);
    }
  }
  out.network = Network(base, net.buses(), net.lines(), std::move(gens), std::move(demands));
  return out;
}

/// Cartesian product of placements and modes, placements outermost.
[[nodiscard]] inline std::vector<EffectiveCase> enumerate_cases(const Network& net,
                                                               const std::vector<DerPlacement>& placements,
                                                               const std::vector<DerMode>& modes) {
  std::vector<EffectiveCase> out;
  out.reserve(placements.size() * modes.size());
  for (const auto& p : placements)
    for (DerMode m : modes) out.push_back(apply_der_mode(net, p, m));
  return out;
}

/// Placement description as stored in scenario files.
[[nodiscard]] inline DerPlacement placement_from_json(const nlohmann::json& j) {
  DerPlacement p;
  try {
    p.name = j.value("name", std::string("custom"));
    p.der_nodes = j.at("der_nodes").get<std::vector<BusId>>();
    p.p_max = j.value("p_max", p.p_max);
    p.q_min = j.value("q_min", p.q_min);
    p.q_max = j.value("q_max", p.q_max);
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(std::string("placement: ") + e.what());
  }
  return p;
}

[[nodiscard]] inline nlohmann::json placement_to_json(const DerPlacement& p) {
  return {{"name", p.name}, {"der_nodes", p.der_nodes}, {"p_max", p.p_max},
          {"q_min", p.q_min}, {"q_max", p.q_max}};
}

struct Scenario {
  DerPlacement placement;
  DerMode mode = DerMode::base;
};

/// Reads a scenario or placement file. The `placement` key holds either an
/// explicit object or the name of a sibling file `<name>.json`; a file with
/// `der_nodes` at top level is itself a placement (mode defaults to base).
[[nodiscard]] inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("scenario: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ScenarioError(std::string("scenario: malformed JSON: ") + e.what());
  }
  Scenario s;
  if (j.contains("der_nodes")) {
    s.placement = placement_from_json(j);
  } else if (j.contains("placement") && j["placement"].is_string()) {
    const auto dir = std::filesystem::path(path).parent_path();
    s.placement = load_scenario((dir / (j["placement"].get<std::string>() + ".json")).string()).placement;
  } else if (j.contains("placement")) {
    s.placement = placement_from_json(j["placement"]);
  } else {
    throw ScenarioError("scenario: missing 'placement'");
  }
  if (j.contains("mode")) s.mode = der_mode_from_string(j["mode"].get<std::string>());
  return s;
}

}  // namespace restore
