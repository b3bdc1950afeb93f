#pragma once

// Shared fixtures: bundled data paths, small hand-built networks, random
// radial feeders and a brute-force repair-order oracle that scores every
// permutation with a max-flow computation instead of an LP.

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "restore/network.hpp"

namespace restore::testing {

inline std::string data_path(const std::string& file) { return std::string(RESTORE_DATA_DIR) + "/" + file; }

inline const std::vector<LineId> kBundledDamage = {2, 10, 24, 43, 23, 47, 28, 19, 7, 35, 40, 33, 6, 14, 42, 17, 13, 50};

inline Bus make_bus(BusId id, bool ref = false) {
  Bus b;
  b.id = id;
  b.is_reference = ref;
  return b;
}

inline Line make_line(LineId id, BusId f, BusId t, double x, double limit) {
  Line l;
  l.id = id;
  l.from_bus = f;
  l.to_bus = t;
  l.g = 0.0;
  l.b = -1.0 / x;
  l.thermal_limit = limit;
  return l;
}

inline Generator make_gen(GenId id, BusId bus, double p_min, double p_max, double q = 10.0,
                          GeneratorKind kind = GeneratorKind::substation) {
  Generator g;
  g.id = id;
  g.bus = bus;
  g.p_min = p_min;
  g.p_max = p_max;
  g.q_min = -q;
  g.q_max = q;
  g.kind = kind;
  return g;
}

inline Demand make_demand(DemandId id, BusId bus, double p, double q = 0.0) {
  Demand d;
  d.id = id;
  d.bus = bus;
  d.p = p;
  d.q = q;
  return d;
}

/// Chain 1 - 2 - ... - n, substation at bus 1, one demand per other bus.
inline Network chain(int n, const std::vector<double>& loads, double limit = 10.0) {
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Demand> demands;
  for (int i = 1; i <= n; ++i) buses.push_back(make_bus(i, i == 1));
  for (int i = 1; i < n; ++i) lines.push_back(make_line(i, i, i + 1, 0.01, limit));
  for (int i = 2; i <= n; ++i) demands.push_back(make_demand(i - 1, i, loads.at(i - 2)));
  return Network(1.0, buses, lines, {make_gen(1, 1, -10.0, 10.0)}, demands);
}

/// Random radial feeder: bus 1 holds the substation, every other bus hangs
/// off an earlier one. Some buses carry loads, some a small generator.
/// Capacities are drawn so that thermal and supply limits sometimes bind.
inline Network random_radial(std::mt19937& rng, int n_buses, int n_damaged) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<Demand> demands;
  std::vector<Generator> gens;
  for (int i = 1; i <= n_buses; ++i) buses.push_back(make_bus(i, i == 1));
  std::vector<int> parent(n_buses + 1, 0);
  for (int i = 2; i <= n_buses; ++i) parent[i] = 1 + static_cast<int>(u(rng) * (i - 1));
  double total = 0.0;
  for (int i = 2; i <= n_buses; ++i)
    if (u(rng) < 0.8) {
      const double p = 0.05 + u(rng);
      total += p;
      demands.push_back(make_demand(static_cast<DemandId>(demands.size() + 1), i, p, 0.3 * p));
    }
  gens.push_back(make_gen(1, 1, -5.0, std::max(0.1, total * (0.4 + 0.9 * u(rng)))));
  for (int i = 2; i <= n_buses; ++i)
    if (u(rng) < 0.3)
      gens.push_back(make_gen(static_cast<GenId>(gens.size() + 1), i, 0.0, 0.4 * u(rng), 0.2,
                              GeneratorKind::utility_der));
  for (int i = 2; i <= n_buses; ++i) {
    const double x = 0.002 + 0.008 * u(rng);
    const double limit = u(rng) < 0.3 ? 0.1 + 0.6 * u(rng) : 10.0;
    // Random orientation exercises both signs of the flow.
    if (u(rng) < 0.5) lines.push_back(make_line(i - 1, parent[i], i, x, limit));
    else lines.push_back(make_line(i - 1, i, parent[i], x, limit));
  }
  std::vector<int> ids(lines.size());
  std::iota(ids.begin(), ids.end(), 1);
  std::shuffle(ids.begin(), ids.end(), rng);
  for (int k = 0; k < n_damaged && k < static_cast<int>(ids.size()); ++k)
    for (auto& l : lines)
      if (l.id == ids[k]) l.damaged = true;
  return Network(1.0, buses, lines, gens, demands);
}

/// Dinic max flow on a small dense graph.
class MaxFlow {
 public:
  explicit MaxFlow(int n) : cap_(n, std::vector<double>(n, 0.0)) {}
  void add(int a, int b, double c) { cap_[a][b] += c; }
  double run(int s, int t) {
    const int n = static_cast<int>(cap_.size());
    double total = 0.0;
    for (;;) {
      std::vector<int> level(n, -1);
      level[s] = 0;
      std::deque<int> q{s};
      while (!q.empty()) {
        const int u = q.front();
        q.pop_front();
        for (int v = 0; v < n; ++v)
          if (level[v] < 0 && cap_[u][v] > 1e-12) {
            level[v] = level[u] + 1;
            q.push_back(v);
          }
      }
      if (level[t] < 0) return total;
      std::vector<int> it(n, 0);
      for (;;) {
        const double f = push(s, t, std::numeric_limits<double>::infinity(), level, it);
        if (f <= 1e-12) break;
        total += f;
      }
    }
  }

 private:
  double push(int u, int t, double f, const std::vector<int>& level, std::vector<int>& it) {
    if (u == t) return f;
    const int n = static_cast<int>(cap_.size());
    for (; it[u] < n; ++it[u]) {
      const int v = it[u];
      if (level[v] != level[u] + 1 || cap_[u][v] <= 1e-12) continue;
      const double got = push(v, t, std::min(f, cap_[u][v]), level, it);
      if (got > 0.0) {
        cap_[u][v] -= got;
        cap_[v][u] += got;
        return got;
      }
    }
    return 0.0;
  }
  std::vector<std::vector<double>> cap_;
};

/// Largest servable load (per-unit) with only the lines in `in_service`
/// usable. On a tree any flow pattern is realizable by bus angles, so this
/// matches the DC model as long as angle limits are slack.
inline double max_served(const Network& net, const std::vector<char>& in_service) {
  const int nb = static_cast<int>(net.buses().size());
  const int s = nb, t = nb + 1;
  MaxFlow mf(nb + 2);
  for (const auto& g : net.generators())
    if (g.p_max > 0.0) mf.add(s, static_cast<int>(*net.bus_index(g.bus)), g.p_max);
  for (const auto& d : net.demands()) mf.add(static_cast<int>(*net.bus_index(d.bus)), t, d.p);
  for (std::size_t l = 0; l < net.lines().size(); ++l) {
    if (!in_service[l]) continue;
    const auto& line = net.lines()[l];
    const int a = static_cast<int>(*net.bus_index(line.from_bus)), b = static_cast<int>(*net.bus_index(line.to_bus));
    mf.add(a, b, line.thermal_limit);
    mf.add(b, a, line.thermal_limit);
  }
  return mf.run(s, t);
}

struct OracleResult {
  double served_mwh = 0.0;
  std::vector<LineId> order;
};

/// Tries every repair order of the damaged lines, one repair per period
/// after an initial period, and keeps the best served energy.
inline OracleResult brute_force_order(const Network& net, double step_hours = 1.0) {
  std::vector<LineId> damaged;
  for (const auto& l : net.lines())
    if (l.damaged) damaged.push_back(l.id);
  std::sort(damaged.begin(), damaged.end());
  OracleResult best;
  best.served_mwh = -1.0;
  do {
    std::vector<char> on(net.lines().size());
    for (std::size_t l = 0; l < on.size(); ++l) on[l] = !net.lines()[l].damaged;
    double served = max_served(net, on);
    for (LineId id : damaged) {
      on[*net.line_index(id)] = 1;
      served += max_served(net, on);
    }
    served *= step_hours * net.base_mva();
    if (served > best.served_mwh + 1e-12) {
      best.served_mwh = served;
      best.order = damaged;
    }
  } while (std::next_permutation(damaged.begin(), damaged.end()));
  return best;
}

}  // namespace restore::testing
