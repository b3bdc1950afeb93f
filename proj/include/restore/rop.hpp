#pragma once

// Restoration ordering: a multi-period mixed-integer DC load-shedding model
// that picks when each damaged component comes back, one repair per period
// by default, maximizing served energy over the horizon.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "restore/milp/backend.hpp"
#include "restore/milp/branch_and_bound.hpp"
#include "restore/network.hpp"
#include "restore/scenarios.hpp"

namespace restore {

class RopError : public Error {
 public:
  using Error::Error;
};

enum class ComponentKind { bus, line, generator, demand };

struct Component {
  ComponentKind kind = ComponentKind::line;
  int id = 0;
  auto operator<=>(const Component&) const = default;
};

[[nodiscard]] inline std::string to_string(const Component& c) {
  switch (c.kind) {
    case ComponentKind::bus: return "bus:" + std::to_string(c.id);
    case ComponentKind::line: return "line:" + std::to_string(c.id);
    case ComponentKind::generator: return "generator:" + std::to_string(c.id);
    case ComponentKind::demand: return "demand:" + std::to_string(c.id);
  }
  return "?";
}

[[nodiscard]] inline Component component_from_string(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw RopError("bad component key '" + s + "'");
  const auto kind = s.substr(0, colon);
  Component c;
  try {
    c.id = std::stoi(s.substr(colon + 1));
  } catch (const std::exception&) {
    throw RopError("bad component key '" + s + "'");
  }
  if (kind == "bus") c.kind = ComponentKind::bus;
  else if (kind == "line") c.kind = ComponentKind::line;
  else if (kind == "generator") c.kind = ComponentKind::generator;
  else if (kind == "demand") c.kind = ComponentKind::demand;
  else throw RopError("bad component key '" + s + "'");
  return c;
}

/// Damaged component ids by kind.
struct DamageSet {
  std::set<BusId> buses;
  std::set<LineId> lines;
  std::set<GenId> generators;
  std::set<DemandId> demands;

  [[nodiscard]] std::size_t size() const { return buses.size() + lines.size() + generators.size() + demands.size(); }
  [[nodiscard]] bool contains(const Component& c) const {
    switch (c.kind) {
      case ComponentKind::bus: return buses.count(c.id) > 0;
      case ComponentKind::line: return lines.count(c.id) > 0;
      case ComponentKind::generator: return generators.count(c.id) > 0;
      case ComponentKind::demand: return demands.count(c.id) > 0;
    }
    return false;
  }
  /// All damaged components, buses first, then lines, generators, demands;
  /// ids ascending within a kind.
  [[nodiscard]] std::vector<Component> components() const {
    std::vector<Component> out;
    for (int id : buses) out.push_back({ComponentKind::bus, id});
    for (int id : lines) out.push_back({ComponentKind::line, id});
    for (int id : generators) out.push_back({ComponentKind::generator, id});
    for (int id : demands) out.push_back({ComponentKind::demand, id});
    return out;
  }
};

/// Damage flags carried by the network itself.
[[nodiscard]] inline DamageSet damage_of(const Network& net) {
  DamageSet d;
  for (const auto& b : net.buses())
    if (b.damaged) d.buses.insert(b.id);
  for (const auto& l : net.lines())
    if (l.damaged) d.lines.insert(l.id);
  for (const auto& g : net.generators())
    if (g.damaged) d.generators.insert(g.id);
  for (const auto& x : net.demands())
    if (x.damaged) d.demands.insert(x.id);
  return d;
}

/// Angle-decoupling constant: the sum over all lines of the widest angle
/// bound. No two buses of a tree can be further apart than this.
[[nodiscard]] inline double compute_big_m(const Network& net) {
  double m = 0.0;
  for (const auto& l : net.lines()) m += std::max(std::abs(l.angle_min), l.angle_max);
  return m;
}

[[nodiscard]] inline double compute_big_m(const EffectiveCase& c) { return compute_big_m(c.network); }

struct RopOptions {
  int repairs_per_period = 1;
  /// Adds valid inequalities that tighten the LP relaxation on radial
  /// networks without cutting off any integer solution.
  bool strengthen = true;
  /// Angle-difference limits on energized lines.
  bool angle_limits = true;
  std::size_t group_cut_limit = 64;  // block groups per damaged line
};

struct RopInstance {
  EffectiveCase scenario;
  DamageSet damage;
  TimeGrid time;
  RopOptions options;
  double big_m_theta = 0.0;
  milp::MilpProblem problem;
  std::vector<Component> components;  // z order
  // Column maps, [period][position in the network collection]; -1 when the
  // quantity is a constant.
  std::vector<std::vector<int>> x_col, z_col, pg_col, pl_col, theta_col;
  std::vector<int> budget_row;  // per period
};

namespace detail {

struct Term {
  int col;
  double coef;
};

// Buses on the side of line `l` away from the reference bus, or empty when
// the line does not separate the reference from anything (cycle, or the
// line lies outside the reference component).
inline std::vector<std::size_t> far_side(const Network& net, std::size_t l) {
  const auto ref = net.reference_bus();
  if (!ref) return {};
  const std::size_t nb = net.buses().size();
  std::vector<char> seen(nb, 0);
  std::vector<std::size_t> stack{*ref};
  seen[*ref] = 1;
  while (!stack.empty()) {
    const auto u = stack.back();
    stack.pop_back();
    for (auto k : net.lines_at(u)) {
      if (k == l) continue;
      const auto v = net.neighbor(k, u);
      if (!seen[v]) {
        seen[v] = 1;
        stack.push_back(v);
      }
    }
  }
  const auto f = *net.bus_index(net.lines()[l].from_bus);
  const auto t = *net.bus_index(net.lines()[l].to_bus);
  if (seen[f] == seen[t]) return {};
  const auto start = seen[f] ? t : f;
  std::vector<std::size_t> side{start};
  std::vector<char> mark(nb, 0);
  mark[start] = 1;
  for (std::size_t i = 0; i < side.size(); ++i) {
    const auto u = side[i];
    for (auto k : net.lines_at(u)) {
      if (k == l) continue;
      const auto v = net.neighbor(k, u);
      if (!mark[v]) {
        mark[v] = 1;
        side.push_back(v);
      }
    }
  }
  return side;
}

struct GroupCut {
  std::vector<std::size_t> demands;
  std::vector<std::pair<int, double>> gates;  // component position, coefficient
  double rhs = 0.0;
};

// Blocks are the pieces left when damaged lines are removed; on a radial
// network they form a tree rooted at the reference bus. For a connected
// group S of blocks hanging below damaged line l,
//
//   served(S) <= G_S + (D_S - G_S) z_l + sum_c min(G_beyond(c), D_S - G_S) z_c
//
// over the damaged lines c leaving S downward. Groups are enumerated per
// top block up to `limit`.
inline std::vector<GroupCut> group_cuts(const Network& net, const DamageSet& damage,
                                        const std::map<Component, std::size_t>& comp_pos, std::size_t limit) {
  const auto nb = net.buses().size(), nl = net.lines().size();
  const auto ref = net.reference_bus();
  if (!ref) return {};
  UnionFind uf(nb);
  for (std::size_t l = 0; l < nl; ++l)
    if (!damage.lines.count(net.lines()[l].id))
      uf.unite(*net.bus_index(net.lines()[l].from_bus), *net.bus_index(net.lines()[l].to_bus));

  std::map<std::size_t, std::vector<std::size_t>> child_lines;  // block -> damaged lines below it
  std::map<std::size_t, std::size_t> top_line, child_block;     // block -> line above; line -> block below
  std::vector<double> beyond(nl, 0.0);
  for (std::size_t l = 0; l < nl; ++l) {
    if (!damage.lines.count(net.lines()[l].id)) continue;
    const auto side = far_side(net, l);
    if (side.empty()) return {};
    const auto near = net.neighbor(l, side.front());
    const auto below = uf.find(side.front());
    if (top_line.count(below)) return {};
    top_line[below] = l;
    child_block[l] = below;
    child_lines[uf.find(near)].push_back(l);
    for (auto b : side)
      for (auto g : net.generators_at(b)) beyond[l] += std::max(0.0, net.generators()[g].p_max);
  }
  std::map<std::size_t, double> block_dem, block_gen;
  std::map<std::size_t, std::vector<std::size_t>> block_demands;
  for (std::size_t d = 0; d < net.demands().size(); ++d) {
    const auto blk = uf.find(*net.bus_index(net.demands()[d].bus));
    block_dem[blk] += net.demands()[d].p;
    if (net.demands()[d].p > 0.0) block_demands[blk].push_back(d);
  }
  for (const auto& g : net.generators()) block_gen[uf.find(*net.bus_index(g.bus))] += std::max(0.0, g.p_max);

  using Group = std::vector<std::size_t>;
  std::map<std::size_t, std::vector<Group>> memo;
  std::function<const std::vector<Group>&(std::size_t)> groups = [&](std::size_t blk) -> const std::vector<Group>& {
    if (auto it = memo.find(blk); it != memo.end()) return it->second;
    std::vector<Group> acc{{blk}};
    for (auto c : child_lines[blk]) {
      const auto sub = groups(child_block.at(c));
      std::vector<Group> next;
      for (const auto& g : acc) {
        next.push_back(g);
        for (const auto& h : sub) {
          if (next.size() >= limit) break;
          Group u = g;
          u.insert(u.end(), h.begin(), h.end());
          next.push_back(std::move(u));
        }
      }
      if (next.size() > limit) next.resize(limit);
      acc = std::move(next);
    }
    return memo[blk] = std::move(acc);
  };

  auto line_pos = [&](std::size_t l) {
    return static_cast<int>(comp_pos.at({ComponentKind::line, net.lines()[l].id}));
  };
  std::vector<GroupCut> out;
  for (const auto& [blk, top] : top_line) {
    for (const auto& group : groups(blk)) {
      std::set<std::size_t> in(group.begin(), group.end());
      double dem = 0.0, gen = 0.0;
      GroupCut cut;
      for (auto b : group) {
        dem += block_dem[b];
        gen += block_gen[b];
        cut.demands.insert(cut.demands.end(), block_demands[b].begin(), block_demands[b].end());
      }
      if (cut.demands.empty() || gen >= dem) continue;
      cut.gates.push_back({line_pos(top), dem - gen});
      for (auto b : group)
        for (auto c : child_lines[b])
          if (!in.count(child_block.at(c)) && beyond[c] > 0.0)
            cut.gates.push_back({line_pos(c), std::min(beyond[c], dem - gen)});
      std::sort(cut.demands.begin(), cut.demands.end());
      cut.rhs = gen;

      // Same group with each block gated by its own line.
      if (group.size() > 1) {
        GroupCut split;
        split.demands = cut.demands;
        split.rhs = gen;
        double deficit = 0.0;
        for (auto b : group)
          if (block_dem[b] > block_gen[b]) {
            deficit += block_dem[b] - block_gen[b];
            split.gates.push_back({line_pos(b == blk ? top : top_line.at(b)), block_dem[b] - block_gen[b]});
          }
        for (auto b : group)
          for (auto c : child_lines[b])
            if (!in.count(child_block.at(c)) && beyond[c] > 0.0)
              split.gates.push_back({line_pos(c), std::min(beyond[c], deficit)});
        if (deficit > 0.0) out.push_back(std::move(split));
      }

      bool leaves = false;
      for (auto b : group)
        for (auto c : child_lines[b]) leaves = leaves || !in.count(child_block.at(c));
      if (!leaves) continue;  // whole subtree; covered by the side cut
      out.push_back(std::move(cut));
    }
  }
  return out;
}

}  // namespace detail

/// Assembles the ROP for `scenario` with the given damage and horizon.
[[nodiscard]] inline RopInstance build_rop(const EffectiveCase& scenario, const DamageSet& damage,
                                           const TimeGrid& time, const RopOptions& options = {}) {
  using milp::kInf;
  const Network& net = scenario.network;
  for (int id : damage.buses)
    if (!net.bus_index(id)) throw RopError("damage set: unknown bus " + std::to_string(id));
  for (int id : damage.lines)
    if (!net.line_index(id)) throw RopError("damage set: unknown line " + std::to_string(id));
  for (int id : damage.generators) {
    auto g = net.generator_index(id);
    if (!g) throw RopError("damage set: unknown generator " + std::to_string(id));
    if (net.generators()[*g].kind == GeneratorKind::customer_der)
      throw RopError("damage set: customer DER " + std::to_string(id) + " cannot be damaged");
  }
  for (int id : damage.demands)
    if (!net.demand_index(id)) throw RopError("damage set: unknown demand " + std::to_string(id));
  if (options.repairs_per_period < 1) throw RopError("repairs per period must be at least 1");
  if (!(time.step_hours > 0.0)) throw RopError("period length must be positive");
  const auto needed = TimeGrid::for_damage(damage.size(), options.repairs_per_period).n_periods;
  if (time.n_periods < needed)
    throw RopError("horizon of " + std::to_string(time.n_periods) + " periods cannot fit " +
                   std::to_string(damage.size()) + " repairs (needs " + std::to_string(needed) + ")");
  const auto ref = net.reference_bus();
  if (!ref) throw RopError("network has no reference bus");

  RopInstance inst;
  inst.scenario = scenario;
  inst.damage = damage;
  inst.time = time;
  inst.options = options;
  inst.big_m_theta = compute_big_m(net);
  inst.components = damage.components();

  const int T = time.n_periods;
  const auto nb = net.buses().size(), nl = net.lines().size(), ng = net.generators().size(),
             nd = net.demands().size();
  const double M = inst.big_m_theta;
  const double energy = net.base_mva() * time.step_hours;
  auto& lp = inst.problem.lp;
  lp.sense = milp::Sense::maximize;

  std::map<Component, std::size_t> comp_pos;
  for (std::size_t k = 0; k < inst.components.size(); ++k) comp_pos[inst.components[k]] = k;
  auto bus_comp = [&](std::size_t b) -> int {
    auto it = comp_pos.find({ComponentKind::bus, net.buses()[b].id});
    return it == comp_pos.end() ? -1 : static_cast<int>(it->second);
  };

  // Gates: the z's (by component position) that must all be 1 for an
  // element to be in service.
  std::vector<std::vector<int>> line_gates(nl), gen_gates(ng), demand_gates(nd);
  for (std::size_t l = 0; l < nl; ++l) {
    const auto& line = net.lines()[l];
    if (damage.lines.count(line.id)) line_gates[l].push_back(comp_pos.at({ComponentKind::line, line.id}));
    for (auto b : {*net.bus_index(line.from_bus), *net.bus_index(line.to_bus)})
      if (int c = bus_comp(b); c >= 0 && !damage.lines.count(line.id)) line_gates[l].push_back(c);
  }
  for (std::size_t g = 0; g < ng; ++g) {
    const auto& gen = net.generators()[g];
    if (damage.generators.count(gen.id)) gen_gates[g].push_back(comp_pos.at({ComponentKind::generator, gen.id}));
    else if (int c = bus_comp(*net.bus_index(gen.bus)); c >= 0) gen_gates[g].push_back(c);
  }
  for (std::size_t d = 0; d < nd; ++d) {
    const auto& dem = net.demands()[d];
    if (damage.demands.count(dem.id)) demand_gates[d].push_back(comp_pos.at({ComponentKind::demand, dem.id}));
    else if (int c = bus_comp(*net.bus_index(dem.bus)); c >= 0) demand_gates[d].push_back(c);
  }

  // Flow capacities per line direction, tightened by what can physically
  // sit beyond the line when the network is radial.
  std::vector<double> cap_fwd(nl), cap_rev(nl);
  std::vector<std::vector<std::size_t>> sides(nl);
  std::vector<bool> far_is_to(nl, true);
  for (std::size_t l = 0; l < nl; ++l) {
    cap_fwd[l] = cap_rev[l] = net.lines()[l].thermal_limit;
    if (!options.strengthen) continue;
    sides[l] = detail::far_side(net, l);
    if (sides[l].empty()) continue;
    far_is_to[l] = sides[l].front() == *net.bus_index(net.lines()[l].to_bus);
    double dem = 0.0, gen_max = 0.0, gen_min = 0.0;
    for (auto b : sides[l]) {
      for (auto d : net.demands_at(b)) dem += net.demands()[d].p;
      for (auto g : net.generators_at(b)) {
        gen_max += std::max(0.0, net.generators()[g].p_max);
        gen_min += std::min(0.0, net.generators()[g].p_min);
      }
    }
    // Flow toward the far side is at most its demand less its least
    // generation; flow away from it is at most its generation.
    const double toward = std::max(0.0, dem - gen_min);
    const double away = gen_max;
    double& fwd = far_is_to[l] ? cap_fwd[l] : cap_rev[l];
    double& rev = far_is_to[l] ? cap_rev[l] : cap_fwd[l];
    fwd = std::min(fwd, toward);
    rev = std::min(rev, away);
  }

  std::vector<detail::GroupCut> group_cuts;
  if (options.strengthen) group_cuts = detail::group_cuts(net, damage, comp_pos, options.group_cut_limit);

  inst.x_col.assign(T, std::vector<int>(nd, -1));
  inst.z_col.assign(T, std::vector<int>(inst.components.size(), -1));
  inst.pg_col.assign(T, std::vector<int>(ng, -1));
  inst.pl_col.assign(T, std::vector<int>(nl, -1));
  inst.theta_col.assign(T, std::vector<int>(nb, -1));
  inst.budget_row.assign(T, -1);

  auto suffix = [](const char* kind, int id, int t) {
    return std::string(kind) + "_" + std::to_string(id) + "_" + std::to_string(t);
  };

  for (int t = 0; t < T; ++t) {
    const bool last = t == T - 1;
    for (std::size_t d = 0; d < nd; ++d) {
      const auto& dem = net.demands()[d];
      inst.x_col[t][d] = lp.add_column(suffix("x", dem.id, t), 0.0, 1.0, dem.p * energy);
    }
    for (std::size_t k = 0; k < inst.components.size(); ++k) {
      const auto& c = inst.components[k];
      std::string name = to_string(c);
      std::replace(name.begin(), name.end(), ':', '_');
      const int col = lp.add_column("z_" + name + "_" + std::to_string(t), last ? 1.0 : 0.0, 1.0);
      inst.z_col[t][k] = col;
      inst.problem.integer_columns.push_back(col);
      inst.problem.branch_priority.push_back(T - t);
    }
    for (std::size_t g = 0; g < ng; ++g) {
      const auto& gen = net.generators()[g];
      const double lo = gen_gates[g].empty() ? gen.p_min : std::min(0.0, gen.p_min);
      const double hi = gen_gates[g].empty() ? gen.p_max : std::max(0.0, gen.p_max);
      inst.pg_col[t][g] = lp.add_column(suffix("pg", gen.id, t), lo, hi);
    }
    for (std::size_t l = 0; l < nl; ++l) {
      const auto& line = net.lines()[l];
      inst.pl_col[t][l] = lp.add_column(suffix("pl", line.id, t), -cap_rev[l], cap_fwd[l]);
    }
    for (std::size_t b = 0; b < nb; ++b) {
      const bool is_ref = b == *ref;
      inst.theta_col[t][b] = lp.add_column(suffix("theta", net.buses()[b].id, t), is_ref ? 0.0 : -kInf,
                                           is_ref ? 0.0 : kInf);
    }
  }

  auto z = [&](int t, int k) { return inst.z_col[t][k]; };

  for (int t = 0; t < T; ++t) {
    const std::string ts = std::to_string(t);
    // Repair budget R_t = t * repairs_per_period.
    if (!inst.components.empty()) {
      std::vector<std::pair<int, double>> row;
      for (std::size_t k = 0; k < inst.components.size(); ++k) row.push_back({z(t, k), 1.0});
      inst.budget_row[t] = lp.add_row("budget_" + ts, -kInf, static_cast<double>(t) * options.repairs_per_period, row);
    }
    // Components stay in service once repaired.
    if (t + 1 < T)
      for (std::size_t k = 0; k < inst.components.size(); ++k)
        lp.add_row("mono_" + std::to_string(k) + "_" + ts, -kInf, 0.0, {{z(t, k), 1.0}, {z(t + 1, k), -1.0}});
    // Elements attached to a damaged bus wait for it.
    for (std::size_t k = 0; k < inst.components.size(); ++k) {
      const auto& c = inst.components[k];
      std::vector<std::size_t> buses;
      if (c.kind == ComponentKind::line) {
        const auto& line = net.lines()[*net.line_index(c.id)];
        buses = {*net.bus_index(line.from_bus), *net.bus_index(line.to_bus)};
      } else if (c.kind == ComponentKind::generator) {
        buses = {*net.bus_index(net.generators()[*net.generator_index(c.id)].bus)};
      } else if (c.kind == ComponentKind::demand) {
        buses = {*net.bus_index(net.demands()[*net.demand_index(c.id)].bus)};
      }
      for (auto b : buses)
        if (int cb = bus_comp(b); cb >= 0)
          lp.add_row("prec_" + std::to_string(k) + "_" + ts, -kInf, 0.0, {{z(t, k), 1.0}, {z(t, cb), -1.0}});
    }

    // Nodal balance.
    for (std::size_t b = 0; b < nb; ++b) {
      std::vector<std::pair<int, double>> row;
      for (auto g : net.generators_at(b)) row.push_back({inst.pg_col[t][g], 1.0});
      for (auto d : net.demands_at(b)) row.push_back({inst.x_col[t][d], -net.demands()[d].p});
      for (auto l : net.lines_at(b)) {
        const bool from = *net.bus_index(net.lines()[l].from_bus) == b;
        row.push_back({inst.pl_col[t][l], from ? -1.0 : 1.0});
      }
      if (row.empty()) continue;
      lp.add_row("bal_" + std::to_string(net.buses()[b].id) + "_" + ts, 0.0, 0.0, row);
    }

    // Generator limits for gated units.
    for (std::size_t g = 0; g < ng; ++g) {
      const auto& gen = net.generators()[g];
      for (int k : gen_gates[g]) {
        lp.add_row("gmax_" + std::to_string(gen.id) + "_" + ts, -kInf, 0.0,
                   {{inst.pg_col[t][g], 1.0}, {z(t, k), -gen.p_max}});
        lp.add_row("gmin_" + std::to_string(gen.id) + "_" + ts, 0.0, kInf,
                   {{inst.pg_col[t][g], 1.0}, {z(t, k), -gen.p_min}});
      }
    }
    // Demands behind a damaged bus or damaged themselves.
    for (std::size_t d = 0; d < nd; ++d)
      for (int k : demand_gates[d])
        lp.add_row("xgate_" + std::to_string(net.demands()[d].id) + "_" + ts, -kInf, 0.0,
                   {{inst.x_col[t][d], 1.0}, {z(t, k), -1.0}});

    // DC flow, thermal and angle limits.
    for (std::size_t l = 0; l < nl; ++l) {
      const auto& line = net.lines()[l];
      const auto i = *net.bus_index(line.from_bus), j = *net.bus_index(line.to_bus);
      const int p = inst.pl_col[t][l], ti = inst.theta_col[t][i], tj = inst.theta_col[t][j];
      const std::string ls = std::to_string(line.id) + "_" + ts;
      const auto& gates = line_gates[l];
      if (gates.empty()) {
        lp.add_row("flow_" + ls, 0.0, 0.0, {{p, 1.0}, {ti, line.b}, {tj, -line.b}});
        if (options.angle_limits)
          lp.add_row("angle_" + ls, line.angle_min, line.angle_max, {{ti, 1.0}, {tj, -1.0}});
        continue;
      }
      // With any gate open the line carries nothing and the angle coupling
      // is relaxed by |b| M per open gate, which covers either sign of b.
      const double relax = std::abs(line.b) * M;
      const double n_gates = static_cast<double>(gates.size());
      std::vector<std::pair<int, double>> up{{p, 1.0}, {ti, line.b}, {tj, -line.b}};
      std::vector<std::pair<int, double>> down = up;
      for (int k : gates) {
        up.push_back({z(t, k), relax});
        down.push_back({z(t, k), -relax});
      }
      lp.add_row("flow_ub_" + ls, -kInf, relax * n_gates, up);
      lp.add_row("flow_lb_" + ls, -relax * n_gates, kInf, down);
      for (int k : gates) {
        lp.add_row("therm_ub_" + ls, -kInf, 0.0, {{p, 1.0}, {z(t, k), -cap_fwd[l]}});
        lp.add_row("therm_lb_" + ls, 0.0, kInf, {{p, 1.0}, {z(t, k), cap_rev[l]}});
      }
      if (options.angle_limits) {
        std::vector<std::pair<int, double>> aup{{ti, 1.0}, {tj, -1.0}};
        std::vector<std::pair<int, double>> adown = aup;
        for (int k : gates) {
          aup.push_back({z(t, k), M});
          adown.push_back({z(t, k), -M});
        }
        lp.add_row("angle_ub_" + ls, -kInf, line.angle_max + M * n_gates, aup);
        lp.add_row("angle_lb_" + ls, line.angle_min - M * n_gates, kInf, adown);
      }
    }

    // Served load beyond a damaged line is limited to what that side can
    // generate on its own until the line is back.
    if (options.strengthen) {
      for (std::size_t l = 0; l < nl; ++l) {
        const auto& line = net.lines()[l];
        if (!damage.lines.count(line.id) || sides[l].empty()) continue;
        const int zl = z(t, static_cast<int>(comp_pos.at({ComponentKind::line, line.id})));
        double dem = 0.0, gen_max = 0.0;
        std::vector<std::size_t> ds;
        for (auto b : sides[l]) {
          for (auto d : net.demands_at(b)) {
            dem += net.demands()[d].p;
            if (net.demands()[d].p > 0.0) ds.push_back(d);
          }
          for (auto g : net.generators_at(b)) gen_max += std::max(0.0, net.generators()[g].p_max);
        }
        if (ds.empty()) continue;
        const std::string ls = std::to_string(line.id) + "_" + ts;
        if (gen_max <= 0.0) {
          for (auto d : ds)
            lp.add_row("cut_x_" + std::to_string(net.demands()[d].id) + "_" + ls, -kInf, 0.0,
                       {{inst.x_col[t][d], 1.0}, {zl, -1.0}});
        } else if (gen_max < dem) {
          std::vector<std::pair<int, double>> row;
          for (auto d : ds) row.push_back({inst.x_col[t][d], net.demands()[d].p});
          row.push_back({zl, -(dem - gen_max)});
          lp.add_row("cut_side_" + ls, -kInf, gen_max, row);
        }
      }
      // Groups of blocks behind a damaged line import only across the
      // damaged lines bounding them, each bringing at most what lies beyond.
      for (std::size_t k = 0; k < group_cuts.size(); ++k) {
        const auto& cut = group_cuts[k];
        std::vector<std::pair<int, double>> row;
        for (auto d : cut.demands) row.push_back({inst.x_col[t][d], net.demands()[d].p});
        for (auto [c, coef] : cut.gates) row.push_back({z(t, c), -coef});
        lp.add_row("cut_group_" + std::to_string(k) + "_" + ts, -kInf, cut.rhs, row);
      }
    }
  }

  if (auto msg = inst.problem.check(); !msg.empty()) throw RopError("internal: malformed ROP: " + msg);
  return inst;
}

/// Builds with the damage flags and minimal horizon of the scenario network.
[[nodiscard]] inline RopInstance build_rop(const EffectiveCase& scenario, const RopOptions& options = {}) {
  const auto damage = damage_of(scenario.network);
  return build_rop(scenario, damage, TimeGrid::for_damage(damage.size(), options.repairs_per_period), options);
}

struct RestorationPlan {
  int n_periods = 1;
  double step_hours = 1.0;
  std::vector<std::vector<Component>> schedule;  // newly energized per period
  std::map<Component, int> energization;         // first period in service
  std::vector<DemandId> demand_ids;
  std::vector<std::vector<double>> served_fraction;  // [demand][period]
  double objective_mwh = 0.0;
  milp::SolveStatus status = milp::SolveStatus::optimal;
  double gap = 0.0;
  long nodes = 0;

  /// Energization state of `c` in period `t`; undamaged components are
  /// always in service.
  [[nodiscard]] bool energized(const Component& c, int t) const {
    auto it = energization.find(c);
    return it == energization.end() || it->second <= t;
  }
};

/// Damaged components ordered by energization period, ties by id.
[[nodiscard]] inline std::vector<Component> plan_order(const RestorationPlan& plan) {
  std::vector<std::pair<int, Component>> items;
  for (const auto& [c, t] : plan.energization) items.push_back({t, c});
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    if (a.second.id != b.second.id) return a.second.id < b.second.id;
    return a.second.kind < b.second.kind;
  });
  std::vector<Component> out;
  for (auto& [t, c] : items) out.push_back(c);
  return out;
}

/// Checks the plan invariants against a damage set and budget; returns the
/// first problem found, or an empty string.
[[nodiscard]] inline std::string check_plan(const RestorationPlan& plan, const DamageSet& damage,
                                            int repairs_per_period = 1) {
  if (plan.energization.size() != damage.size()) return "plan covers a different number of components than the damage set";
  for (const auto& [c, t] : plan.energization) {
    if (!damage.contains(c)) return to_string(c) + " is not damaged";
    if (t < 1 || t >= plan.n_periods) return to_string(c) + " energized outside the horizon";
  }
  if (static_cast<int>(plan.schedule.size()) != plan.n_periods) return "schedule length differs from the horizon";
  std::size_t cumulative = 0;
  for (int t = 0; t < plan.n_periods; ++t) {
    cumulative += plan.schedule[t].size();
    if (cumulative > static_cast<std::size_t>(t) * repairs_per_period) return "budget exceeded in period " + std::to_string(t);
    for (const auto& c : plan.schedule[t]) {
      auto it = plan.energization.find(c);
      if (it == plan.energization.end() || it->second != t) return "schedule and energization disagree on " + to_string(c);
    }
  }
  if (cumulative != damage.size()) return "not every component is energized by the final period";
  for (const auto& row : plan.served_fraction)
    for (double x : row)
      if (x < -1e-9 || x > 1.0 + 1e-9) return "served fraction outside [0, 1]";
  return {};
}

/// Solves the instance and extracts the repair schedule. Throws RopError
/// when the problem is infeasible or unbounded; a plan whose gap did not
/// close within the node budget comes back with status incumbent_with_gap.
[[nodiscard]] inline RestorationPlan solve_rop(const RopInstance& inst, const milp::MilpOptions& opt = {},
                                               milp::MilpBackend* backend = nullptr) {
  milp::Solution sol;
  if (backend) {
    sol = backend->solve(inst.problem, opt);
  } else {
    sol = milp::solve_milp(inst.problem, opt);
  }
  if (sol.status == milp::SolveStatus::infeasible) throw RopError("restoration problem is infeasible");
  if (sol.status == milp::SolveStatus::unbounded) throw RopError("restoration problem is unbounded");

  const Network& net = inst.scenario.network;
  RestorationPlan plan;
  plan.n_periods = inst.time.n_periods;
  plan.step_hours = inst.time.step_hours;
  plan.schedule.assign(plan.n_periods, {});
  plan.status = sol.status;
  plan.gap = sol.gap;
  plan.nodes = sol.nodes;
  plan.objective_mwh = sol.objective;
  for (std::size_t k = 0; k < inst.components.size(); ++k) {
    int first = plan.n_periods - 1;
    for (int t = 0; t < plan.n_periods; ++t)
      if (sol.x[inst.z_col[t][k]] > 0.5) {
        first = t;
        break;
      }
    plan.energization[inst.components[k]] = first;
    plan.schedule[first].push_back(inst.components[k]);
  }
  for (auto& s : plan.schedule) std::sort(s.begin(), s.end(), [](const Component& a, const Component& b) {
    return a.id != b.id ? a.id < b.id : a.kind < b.kind;
  });
  for (std::size_t d = 0; d < net.demands().size(); ++d) {
    plan.demand_ids.push_back(net.demands()[d].id);
    std::vector<double> row(plan.n_periods);
    for (int t = 0; t < plan.n_periods; ++t) row[t] = std::clamp(sol.x[inst.x_col[t][d]], 0.0, 1.0);
    plan.served_fraction.push_back(std::move(row));
  }
  return plan;
}

[[nodiscard]] inline nlohmann::json plan_to_json(const RestorationPlan& plan) {
  using nlohmann::json;
  json j;
  j["schedule"] = json::array();
  for (const auto& s : plan.schedule) {
    json period = json::array();
    for (const auto& c : s) period.push_back(to_string(c));
    j["schedule"].push_back(period);
  }
  j["energization"] = json::object();
  for (const auto& [c, t] : plan.energization) j["energization"][to_string(c)] = t;
  j["objective_mwh"] = plan.objective_mwh;
  j["n_periods"] = plan.n_periods;
  j["step_hours"] = plan.step_hours;
  j["status"] = milp::to_string(plan.status);
  j["gap"] = plan.gap;
  j["served_fraction"] = json::object();
  for (std::size_t d = 0; d < plan.demand_ids.size(); ++d)
    j["served_fraction"][std::to_string(plan.demand_ids[d])] = plan.served_fraction[d];
  return j;
}

[[nodiscard]] inline RestorationPlan plan_from_json(const nlohmann::json& j) {
  RestorationPlan plan;
  try {
    const auto& sched = j.at("schedule");
    plan.n_periods = static_cast<int>(sched.size());
    plan.step_hours = j.value("step_hours", 1.0);
    plan.objective_mwh = j.value("objective_mwh", 0.0);
    plan.schedule.assign(plan.n_periods, {});
    for (int t = 0; t < plan.n_periods; ++t)
      for (const auto& c : sched[t]) {
        const auto comp = component_from_string(c.get<std::string>());
        plan.schedule[t].push_back(comp);
        plan.energization[comp] = t;
      }
    if (j.contains("energization"))
      for (const auto& [key, t] : j["energization"].items()) {
        const auto comp = component_from_string(key);
        auto it = plan.energization.find(comp);
        if (it == plan.energization.end() || it->second != t.get<int>())
          throw RopError("plan: schedule and energization disagree on " + key);
      }
    if (j.contains("status")) {
      const auto s = j["status"].get<std::string>();
      plan.status = s == "incumbent_with_gap" ? milp::SolveStatus::incumbent_with_gap : milp::SolveStatus::optimal;
    }
    plan.gap = j.value("gap", 0.0);
    if (j.contains("served_fraction")) {
      // Object keys come back in string order; restore numeric id order.
      std::map<DemandId, std::vector<double>> rows;
      for (const auto& [key, row] : j["served_fraction"].items()) rows[std::stoi(key)] = row.get<std::vector<double>>();
      for (auto& [id, row] : rows) {
        plan.demand_ids.push_back(id);
        plan.served_fraction.push_back(std::move(row));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw RopError(std::string("plan: ") + e.what());
  }
  return plan;
}

}  // namespace restore
