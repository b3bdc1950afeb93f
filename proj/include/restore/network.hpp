#pragma once

// Feeder data model: buses, lines, generators and demands of a radial
// distribution network, plus structural validation.
//
// All electrical quantities held by these types are per-unit on
// Network::base_mva. Angles are in radians.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace restore {

using BusId = int;
using LineId = int;
using GenId = int;
using DemandId = int;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a network or case file violates a structural invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

struct Bus {
  BusId id = 0;
  bool is_reference = false;
  double v_min = 0.9;
  double v_max = 1.1;
  bool damaged = false;
};

struct Line {
  LineId id = 0;
  BusId from_bus = 0;
  BusId to_bus = 0;
  double g = 0.0;  // series conductance
  double b = 0.0;  // series susceptance, negative for inductive lines
  double g_fr = 0.0;
  double b_fr = 0.0;
  double g_to = 0.0;
  double b_to = 0.0;
  double tap_r = 1.0;
  double tap_i = 0.0;
  double thermal_limit = 1.0;  // apparent power
  double angle_min = -0.52;
  double angle_max = 0.52;
  bool damaged = false;

  [[nodiscard]] double tap_magnitude() const { return std::hypot(tap_r, tap_i); }
};

enum class GeneratorKind { substation, utility_der, customer_der };

[[nodiscard]] inline const char* to_string(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::substation: return "substation";
    case GeneratorKind::utility_der: return "utility_der";
    case GeneratorKind::customer_der: return "customer_der";
  }
  return "?";
}

[[nodiscard]] inline GeneratorKind generator_kind_from_string(const std::string& s) {
  if (s == "substation") return GeneratorKind::substation;
  if (s == "utility_der") return GeneratorKind::utility_der;
  if (s == "customer_der") return GeneratorKind::customer_der;
  throw ValidationError("unknown generator kind '" + s + "'");
}

struct Generator {
  GenId id = 0;
  BusId bus = 0;
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  GeneratorKind kind = GeneratorKind::substation;
  bool damaged = false;
};

struct Demand {
  DemandId id = 0;
  BusId bus = 0;
  double p = 0.0;
  double q = 0.0;
  bool has_der = false;
  bool damaged = false;
};

/// One violated invariant. `element` names the offending component,
/// e.g. "bus 7" or "line 12".
struct Violation {
  std::string element;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  [[nodiscard]] bool ok() const { return violations.empty(); }
  [[nodiscard]] std::string summary() const {
    std::string out;
    for (const auto& v : violations) {
      if (!out.empty()) out += "; ";
      out += v.element + ": " + v.message;
    }
    return out;
  }
};

/// Immutable description of a feeder. Components are stored in the order
/// given; `*_index` maps translate external ids to positions.
class Network {
 public:
  Network() = default;
  Network(double base_mva, std::vector<Bus> buses, std::vector<Line> lines,
          std::vector<Generator> generators, std::vector<Demand> demands)
      : base_mva_(base_mva),
        buses_(std::move(buses)),
        lines_(std::move(lines)),
        generators_(std::move(generators)),
        demands_(std::move(demands)) {
    index();
  }

  [[nodiscard]] double base_mva() const { return base_mva_; }
  [[nodiscard]] const std::vector<Bus>& buses() const { return buses_; }
  [[nodiscard]] const std::vector<Line>& lines() const { return lines_; }
  [[nodiscard]] const std::vector<Generator>& generators() const { return generators_; }
  [[nodiscard]] const std::vector<Demand>& demands() const { return demands_; }

  [[nodiscard]] std::optional<std::size_t> bus_index(BusId id) const { return find(bus_pos_, id); }
  [[nodiscard]] std::optional<std::size_t> line_index(LineId id) const { return find(line_pos_, id); }
  [[nodiscard]] std::optional<std::size_t> generator_index(GenId id) const { return find(gen_pos_, id); }
  [[nodiscard]] std::optional<std::size_t> demand_index(DemandId id) const { return find(demand_pos_, id); }

  // Per-bus membership, as positions into the flat collections. Only
  // defined for buses that exist; dangling references are skipped.
  [[nodiscard]] const std::vector<std::size_t>& lines_at(std::size_t bus) const { return lines_at_[bus]; }
  [[nodiscard]] const std::vector<std::size_t>& generators_at(std::size_t bus) const { return gens_at_[bus]; }
  [[nodiscard]] const std::vector<std::size_t>& demands_at(std::size_t bus) const { return demands_at_[bus]; }

  /// Position of the (first) reference bus, if any.
  [[nodiscard]] std::optional<std::size_t> reference_bus() const {
    for (std::size_t i = 0; i < buses_.size(); ++i)
      if (buses_[i].is_reference) return i;
    return std::nullopt;
  }

  /// Position of the bus at the other end of line `line` seen from `bus`.
  [[nodiscard]] std::size_t neighbor(std::size_t line, std::size_t bus) const {
    const auto f = *bus_index(lines_[line].from_bus);
    return f == bus ? *bus_index(lines_[line].to_bus) : f;
  }

  [[nodiscard]] double total_demand_p() const {
    return std::accumulate(demands_.begin(), demands_.end(), 0.0,
                           [](double s, const Demand& d) { return s + d.p; });
  }

  [[nodiscard]] std::size_t damaged_count() const {
    std::size_t n = 0;
    for (const auto& b : buses_) n += b.damaged;
    for (const auto& l : lines_) n += l.damaged;
    for (const auto& g : generators_) n += g.damaged;
    for (const auto& d : demands_) n += d.damaged;
    return n;
  }

  bool operator==(const Network& other) const;

 private:
  using PosMap = std::unordered_map<int, std::size_t>;

  static std::optional<std::size_t> find(const PosMap& m, int id) {
    auto it = m.find(id);
    if (it == m.end()) return std::nullopt;
    return it->second;
  }

  void index() {
    bus_pos_.clear();
    line_pos_.clear();
    gen_pos_.clear();
    demand_pos_.clear();
    for (std::size_t i = 0; i < buses_.size(); ++i) bus_pos_.emplace(buses_[i].id, i);
    for (std::size_t i = 0; i < lines_.size(); ++i) line_pos_.emplace(lines_[i].id, i);
    for (std::size_t i = 0; i < generators_.size(); ++i) gen_pos_.emplace(generators_[i].id, i);
    for (std::size_t i = 0; i < demands_.size(); ++i) demand_pos_.emplace(demands_[i].id, i);
    lines_at_.assign(buses_.size(), {});
    gens_at_.assign(buses_.size(), {});
    demands_at_.assign(buses_.size(), {});
    for (std::size_t l = 0; l < lines_.size(); ++l) {
      auto f = bus_index(lines_[l].from_bus);
      auto t = bus_index(lines_[l].to_bus);
      if (f) lines_at_[*f].push_back(l);
      if (t && t != f) lines_at_[*t].push_back(l);
    }
    for (std::size_t g = 0; g < generators_.size(); ++g)
      if (auto b = bus_index(generators_[g].bus)) gens_at_[*b].push_back(g);
    for (std::size_t d = 0; d < demands_.size(); ++d)
      if (auto b = bus_index(demands_[d].bus)) demands_at_[*b].push_back(d);
  }

  double base_mva_ = 1.0;
  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  std::vector<Generator> generators_;
  std::vector<Demand> demands_;
  PosMap bus_pos_, line_pos_, gen_pos_, demand_pos_;
  std::vector<std::vector<std::size_t>> lines_at_, gens_at_, demands_at_;
};

inline bool operator==(const Bus& a, const Bus& b) {
  return a.id == b.id && a.is_reference == b.is_reference && a.v_min == b.v_min &&
         a.v_max == b.v_max && a.damaged == b.damaged;
}
inline bool operator==(const Line& a, const Line& b) {
  return a.id == b.id && a.from_bus == b.from_bus && a.to_bus == b.to_bus && a.g == b.g &&
         a.b == b.b && a.g_fr == b.g_fr && a.b_fr == b.b_fr && a.g_to == b.g_to &&
         a.b_to == b.b_to && a.tap_r == b.tap_r && a.tap_i == b.tap_i &&
         a.thermal_limit == b.thermal_limit && a.angle_min == b.angle_min &&
         a.angle_max == b.angle_max && a.damaged == b.damaged;
}
inline bool operator==(const Generator& a, const Generator& b) {
  return a.id == b.id && a.bus == b.bus && a.p_min == b.p_min && a.p_max == b.p_max &&
         a.q_min == b.q_min && a.q_max == b.q_max && a.kind == b.kind && a.damaged == b.damaged;
}
inline bool operator==(const Demand& a, const Demand& b) {
  return a.id == b.id && a.bus == b.bus && a.p == b.p && a.q == b.q && a.has_der == b.has_der &&
         a.damaged == b.damaged;
}

inline bool Network::operator==(const Network& other) const {
  return base_mva_ == other.base_mva_ && buses_ == other.buses_ && lines_ == other.lines_ &&
         generators_ == other.generators_ && demands_ == other.demands_;
}

/// Restoration horizon: `n_periods` steps of `step_hours` each. Period 0 is
/// the damaged network before any repair.
struct TimeGrid {
  int n_periods = 1;
  double step_hours = 1.0;

  /// Smallest horizon that lets `damaged` components be energized at
  /// `repairs_per_period` per period, plus the initial period.
  [[nodiscard]] static TimeGrid for_damage(std::size_t damaged, int repairs_per_period = 1,
                                           double step_hours = 1.0) {
    const int per = std::max(1, repairs_per_period);
    const int steps = static_cast<int>((damaged + per - 1) / per);
    return TimeGrid{1 + steps, step_hours};
  }
};

namespace detail {

struct UnionFind {
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    return true;
  }
  std::vector<std::size_t> parent;
};

template <typename Items, typename IdOf>
void check_unique_ids(const Items& items, const char* what, IdOf id_of, ValidationReport& report) {
  std::set<int> seen;
  std::set<int> reported;
  for (const auto& item : items) {
    const int id = id_of(item);
    if (!seen.insert(id).second && reported.insert(id).second)
      report.violations.push_back({std::string(what) + " " + std::to_string(id), "duplicate id"});
  }
}

}  // namespace detail

/// Lists every violated structural invariant. Radiality is checked with all
/// lines in service: the line graph must be acyclic and every bus that
/// carries a line, generator or demand must be connected to the reference
/// bus. A bare bus with nothing attached is tolerated (an open tie point).
[[nodiscard]] inline ValidationReport validate(const Network& net) {
  ValidationReport report;
  auto add = [&](std::string element, std::string message) {
    report.violations.push_back({std::move(element), std::move(message)});
  };

  if (!(net.base_mva() > 0.0)) add("network", "base_mva must be positive");

  detail::check_unique_ids(net.buses(), "bus", [](const Bus& b) { return b.id; }, report);
  detail::check_unique_ids(net.lines(), "line", [](const Line& l) { return l.id; }, report);
  detail::check_unique_ids(net.generators(), "generator", [](const Generator& g) { return g.id; }, report);
  detail::check_unique_ids(net.demands(), "demand", [](const Demand& d) { return d.id; }, report);

  std::size_t n_ref = 0;
  for (const auto& b : net.buses()) {
    const auto name = "bus " + std::to_string(b.id);
    n_ref += b.is_reference;
    if (!(b.v_min > 0.0 && b.v_min < b.v_max)) add(name, "voltage bounds must satisfy 0 < v_min < v_max");
  }
  if (n_ref != 1)
    add("network", "expected exactly one reference bus, found " + std::to_string(n_ref));

  bool dangling = false;
  for (const auto& l : net.lines()) {
    const auto name = "line " + std::to_string(l.id);
    if (!net.bus_index(l.from_bus)) add(name, "unknown from_bus " + std::to_string(l.from_bus)), dangling = true;
    if (!net.bus_index(l.to_bus)) add(name, "unknown to_bus " + std::to_string(l.to_bus)), dangling = true;
    if (l.from_bus == l.to_bus) add(name, "from_bus equals to_bus");
    if (!(l.thermal_limit > 0.0)) add(name, "thermal limit must be positive");
    if (!(l.angle_min < 0.0 && 0.0 < l.angle_max)) add(name, "angle bounds must satisfy min < 0 < max");
    if (!(l.tap_magnitude() > 0.0)) add(name, "tap magnitude must be positive");
  }
  for (const auto& g : net.generators()) {
    const auto name = "generator " + std::to_string(g.id);
    if (!net.bus_index(g.bus)) add(name, "unknown bus " + std::to_string(g.bus)), dangling = true;
    if (g.p_min > g.p_max) add(name, "p_min exceeds p_max");
    if (g.q_min > g.q_max) add(name, "q_min exceeds q_max");
    if (g.damaged && g.kind == GeneratorKind::customer_der)
      add(name, "customer-owned DERs cannot be damaged");
  }
  for (const auto& d : net.demands()) {
    const auto name = "demand " + std::to_string(d.id);
    if (!net.bus_index(d.bus)) add(name, "unknown bus " + std::to_string(d.bus)), dangling = true;
    if (d.p < 0.0) add(name, "negative active demand");
  }

  if (dangling || n_ref == 0) return report;

  detail::UnionFind uf(net.buses().size());
  for (const auto& l : net.lines()) {
    const auto f = *net.bus_index(l.from_bus);
    const auto t = *net.bus_index(l.to_bus);
    if (f != t && !uf.unite(f, t)) add("line " + std::to_string(l.id), "closes a cycle; network is not radial");
  }
  const auto ref = uf.find(*net.reference_bus());
  for (std::size_t i = 0; i < net.buses().size(); ++i) {
    const bool used = !net.lines_at(i).empty() || !net.generators_at(i).empty() || !net.demands_at(i).empty();
    if (used && uf.find(i) != ref)
      add("bus " + std::to_string(net.buses()[i].id), "not connected to the reference bus");
  }
  return report;
}

/// Throws ValidationError carrying the report summary unless `net` is valid.
inline const Network& require_valid(const Network& net) {
  auto report = validate(net);
  if (!report.ok()) throw ValidationError(report.summary());
  return net;
}

/// Copy of `net` with exactly the listed lines flagged as damaged; every
/// other component is undamaged. Electrical parameters are untouched.
[[nodiscard]] inline Network apply_damage(const Network& net, const std::vector<LineId>& damaged_lines) {
  std::set<LineId> ids(damaged_lines.begin(), damaged_lines.end());
  for (LineId id : ids)
    if (!net.line_index(id)) throw ValidationError("line " + std::to_string(id) + ": unknown id in damage list");
  auto buses = net.buses();
  auto lines = net.lines();
  auto gens = net.generators();
  auto demands = net.demands();
  for (auto& b : buses) b.damaged = false;
  for (auto& g : gens) g.damaged = false;
  for (auto& d : demands) d.damaged = false;
  for (auto& l : lines) l.damaged = ids.count(l.id) > 0;
  return Network(net.base_mva(), std::move(buses), std::move(lines), std::move(gens), std::move(demands));
}

/// Ids of every damaged line, in network order.
[[nodiscard]] inline std::vector<LineId> damaged_lines(const Network& net) {
  std::vector<LineId> out;
  for (const auto& l : net.lines())
    if (l.damaged) out.push_back(l.id);
  return out;
}

}  // namespace restore
