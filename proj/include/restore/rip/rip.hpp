#pragma once

// Restoration implementation: replays a fixed repair schedule through one
// AC load-shedding OPF per period. Energization status is a constant per
// period; de-energized elements and islands without a source are removed
// from the nonlinear program and given their forced values directly.

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "restore/rip/ac_flow.hpp"
#include "restore/rip/interior_point.hpp"
#include "restore/rop.hpp"
#include "restore/scenarios.hpp"

namespace restore::rip {

class RipError : public Error {
 public:
  using Error::Error;
};

struct RipOptions {
  double penalty_weight = 1.0;  // per per-unit voltage violation per hour
  double tol = 1e-6;            // residual tolerance, per-unit
  /// Give substation generators reactive limits of +-(total reactive demand).
  bool substation_q_from_demand = true;
  int jobs = 1;
  IpmOptions ipm;
};

/// One connected group of energized buses.
struct Island {
  std::vector<std::size_t> buses, lines, generators, demands;
  std::size_t angle_reference = 0;
  bool has_source = false;
};

struct AcOpfProblem {
  Network network;
  int period = 0;
  double step_hours = 1.0;
  double penalty_weight = 1.0;
  std::vector<char> bus_on, line_on, gen_on, demand_on;
  std::vector<double> gen_q_min, gen_q_max;
  std::vector<Island> islands;
};

struct AcState {
  std::vector<double> v, theta, v_violation;               // per bus
  std::vector<double> p_fr, q_fr, p_to, q_to;              // per line
  std::vector<double> pg, qg;                              // per generator
  std::vector<double> x;                                   // per demand
  double objective = 0.0;  // served energy less voltage penalty, MWh
  bool converged = true;
  int iterations = 0;
};

struct ResidualReport {
  double balance_p = 0.0;
  double balance_q = 0.0;
  double flow = 0.0;
  double voltage = 0.0;
  double thermal = 0.0;
  double angle = 0.0;
  double limits = 0.0;  // generator and served-fraction bounds

  [[nodiscard]] double max() const {
    return std::max({balance_p, balance_q, flow, voltage, thermal, angle, limits});
  }
};

/// Energization status in period `t` under `plan`, propagated from buses
/// to the elements attached to them.
[[nodiscard]] inline AcOpfProblem build_rip_step(const EffectiveCase& scenario, const RestorationPlan& plan, int t,
                                                 const RipOptions& opt = {}) {
  const Network& net = scenario.network;
  if (t < 0 || t >= plan.n_periods) throw RipError("period " + std::to_string(t) + " outside the plan horizon");
  for (const auto& [c, when] : plan.energization) {
    bool known = false;
    switch (c.kind) {
      case ComponentKind::bus: known = net.bus_index(c.id).has_value(); break;
      case ComponentKind::line: known = net.line_index(c.id).has_value(); break;
      case ComponentKind::generator: known = net.generator_index(c.id).has_value(); break;
      case ComponentKind::demand: known = net.demand_index(c.id).has_value(); break;
    }
    if (!known) throw RipError("plan refers to " + to_string(c) + ", which is not in the network");
  }
  const auto flagged = damage_of(net);
  if (flagged.size() > 0)
    for (const auto& c : flagged.components())
      if (!plan.energization.count(c)) throw RipError("damaged " + to_string(c) + " is missing from the plan");

  AcOpfProblem p;
  p.network = net;
  p.period = t;
  p.step_hours = plan.step_hours;
  p.penalty_weight = opt.penalty_weight;
  const auto nb = net.buses().size(), nl = net.lines().size(), ng = net.generators().size(),
             nd = net.demands().size();
  p.bus_on.assign(nb, 0);
  p.line_on.assign(nl, 0);
  p.gen_on.assign(ng, 0);
  p.demand_on.assign(nd, 0);
  for (std::size_t b = 0; b < nb; ++b) p.bus_on[b] = plan.energized({ComponentKind::bus, net.buses()[b].id}, t);
  for (std::size_t l = 0; l < nl; ++l) {
    const auto& line = net.lines()[l];
    p.line_on[l] = plan.energized({ComponentKind::line, line.id}, t) && p.bus_on[*net.bus_index(line.from_bus)] &&
                   p.bus_on[*net.bus_index(line.to_bus)];
  }
  for (std::size_t g = 0; g < ng; ++g)
    p.gen_on[g] = plan.energized({ComponentKind::generator, net.generators()[g].id}, t) &&
                  p.bus_on[*net.bus_index(net.generators()[g].bus)];
  for (std::size_t d = 0; d < nd; ++d)
    p.demand_on[d] = plan.energized({ComponentKind::demand, net.demands()[d].id}, t) &&
                     p.bus_on[*net.bus_index(net.demands()[d].bus)];

  double q_total = 0.0;
  for (const auto& d : net.demands()) q_total += std::abs(d.q);
  for (std::size_t g = 0; g < ng; ++g) {
    const auto& gen = net.generators()[g];
    const bool sub = gen.kind == GeneratorKind::substation && opt.substation_q_from_demand;
    p.gen_q_min.push_back(sub ? -q_total : gen.q_min);
    p.gen_q_max.push_back(sub ? q_total : gen.q_max);
  }

  // Islands over energized lines.
  std::vector<int> island_of(nb, -1);
  const auto ref = net.reference_bus();
  for (std::size_t start = 0; start < nb; ++start) {
    if (!p.bus_on[start] || island_of[start] >= 0) continue;
    Island isl;
    const int id = static_cast<int>(p.islands.size());
    std::vector<std::size_t> stack{start};
    island_of[start] = id;
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      isl.buses.push_back(u);
      for (auto l : net.lines_at(u)) {
        if (!p.line_on[l]) continue;
        const auto v = net.neighbor(l, u);
        if (island_of[v] < 0) {
          island_of[v] = id;
          stack.push_back(v);
        }
      }
    }
    std::sort(isl.buses.begin(), isl.buses.end());
    for (auto b : isl.buses) {
      for (auto l : net.lines_at(b))
        if (p.line_on[l] && *net.bus_index(net.lines()[l].from_bus) == b) isl.lines.push_back(l);
      for (auto g : net.generators_at(b))
        if (p.gen_on[g]) isl.generators.push_back(g);
      for (auto d : net.demands_at(b))
        if (p.demand_on[d]) isl.demands.push_back(d);
    }
    std::sort(isl.lines.begin(), isl.lines.end());
    std::sort(isl.generators.begin(), isl.generators.end());
    std::sort(isl.demands.begin(), isl.demands.end());
    isl.angle_reference = isl.buses.front();
    bool ref_here = false;
    if (ref && island_of[*ref] == id) {
      isl.angle_reference = *ref;
      ref_here = true;
    }
    for (auto g : isl.generators)
      if (net.generators()[g].p_max > 0.0) {
        if (!isl.has_source && !ref_here) isl.angle_reference = *net.bus_index(net.generators()[g].bus);
        isl.has_source = true;
      }
    p.islands.push_back(std::move(isl));
  }
  return p;
}

namespace detail {

// Variable layout of one island's nonlinear program.
struct IslandLayout {
  std::vector<int> theta, v, vt;  // by local bus; theta -1 for the reference
  std::vector<int> pg, qg;        // by local generator
  std::vector<int> x;             // by local demand
  int n = 0;
};

inline IslandLayout layout_island(const Island& isl) {
  IslandLayout lay;
  int k = 0;
  for (auto b : isl.buses) lay.theta.push_back(b == isl.angle_reference ? -1 : k++);
  for (std::size_t i = 0; i < isl.buses.size(); ++i) lay.v.push_back(k++);
  for (std::size_t i = 0; i < isl.buses.size(); ++i) lay.vt.push_back(k++);
  for (std::size_t i = 0; i < isl.generators.size(); ++i) lay.pg.push_back(k++);
  for (std::size_t i = 0; i < isl.generators.size(); ++i) lay.qg.push_back(k++);
  for (std::size_t i = 0; i < isl.demands.size(); ++i) lay.x.push_back(k++);
  lay.n = k;
  return lay;
}

struct IslandSolve {
  Eigen::VectorXd x;
  bool converged = false;
  int iterations = 0;
};

inline IslandSolve solve_island(const AcOpfProblem& prob, const Island& isl, const IpmOptions& ipm) {
  const Network& net = prob.network;
  const auto lay = layout_island(isl);
  std::map<std::size_t, std::size_t> local;
  for (std::size_t i = 0; i < isl.buses.size(); ++i) local[isl.buses[i]] = i;
  const int nbl = static_cast<int>(isl.buses.size());
  const int nll = static_cast<int>(isl.lines.size());

  struct LineData {
    std::size_t fi, ti;  // local bus positions
    LineFlowModel model;
    double limit2, amin, amax;
  };
  std::vector<LineData> lines;
  for (auto l : isl.lines) {
    const auto& line = net.lines()[l];
    lines.push_back({local.at(*net.bus_index(line.from_bus)), local.at(*net.bus_index(line.to_bus)),
                     line_flow_model(line), line.thermal_limit * line.thermal_limit, line.angle_min,
                     line.angle_max});
  }

  NlpProblem nlp;
  nlp.n = lay.n;
  nlp.n_eq = 2 * nbl;
  nlp.n_ineq = 4 * nll + nbl;
  nlp.cost = Eigen::VectorXd::Zero(lay.n);
  nlp.lower = Eigen::VectorXd::Constant(lay.n, -std::numeric_limits<double>::infinity());
  nlp.upper = Eigen::VectorXd::Constant(lay.n, std::numeric_limits<double>::infinity());
  for (int i = 0; i < nbl; ++i) {
    const auto& bus = net.buses()[isl.buses[i]];
    nlp.upper[lay.v[i]] = bus.v_max;
    nlp.lower[lay.vt[i]] = 0.0;
    nlp.upper[lay.vt[i]] = bus.v_min;
    nlp.cost[lay.vt[i]] = prob.penalty_weight;
  }
  for (std::size_t k = 0; k < isl.generators.size(); ++k) {
    const auto g = isl.generators[k];
    nlp.lower[lay.pg[k]] = net.generators()[g].p_min;
    nlp.upper[lay.pg[k]] = net.generators()[g].p_max;
    nlp.lower[lay.qg[k]] = prob.gen_q_min[g];
    nlp.upper[lay.qg[k]] = prob.gen_q_max[g];
  }
  for (std::size_t k = 0; k < isl.demands.size(); ++k) {
    nlp.lower[lay.x[k]] = 0.0;
    nlp.upper[lay.x[k]] = 1.0;
    nlp.cost[lay.x[k]] = -net.demands()[isl.demands[k]].p;
  }

  auto idx4 = [&](std::size_t s, std::size_t o) {
    return std::array<int, 4>{lay.v[s], lay.v[o], lay.theta[s], lay.theta[o]};
  };
  auto var = [](const Eigen::VectorXd& x, int i) { return i < 0 ? 0.0 : x[i]; };

  std::vector<std::size_t> gen_bus, dem_bus;
  for (auto g : isl.generators) gen_bus.push_back(local.at(*net.bus_index(net.generators()[g].bus)));
  for (auto d : isl.demands) dem_bus.push_back(local.at(*net.bus_index(net.demands()[d].bus)));

  nlp.constraints = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g, Eigen::MatrixXd& jg, Eigen::VectorXd& h,
                        Eigen::MatrixXd& jh) {
    // Balance rows: P at 2i, Q at 2i+1.
    for (std::size_t k = 0; k < isl.generators.size(); ++k) {
      g[2 * gen_bus[k]] += x[lay.pg[k]];
      jg(2 * gen_bus[k], lay.pg[k]) += 1.0;
      g[2 * gen_bus[k] + 1] += x[lay.qg[k]];
      jg(2 * gen_bus[k] + 1, lay.qg[k]) += 1.0;
    }
    for (std::size_t k = 0; k < isl.demands.size(); ++k) {
      const auto& d = net.demands()[isl.demands[k]];
      g[2 * dem_bus[k]] -= d.p * x[lay.x[k]];
      jg(2 * dem_bus[k], lay.x[k]) -= d.p;
      g[2 * dem_bus[k] + 1] -= d.q * x[lay.x[k]];
      jg(2 * dem_bus[k] + 1, lay.x[k]) -= d.q;
    }
    for (int li = 0; li < nll; ++li) {
      const auto& ld = lines[li];
      const auto fi = idx4(ld.fi, ld.ti), ti = idx4(ld.ti, ld.fi);
      const double vf = x[lay.v[ld.fi]], vt = x[lay.v[ld.ti]];
      const double thf = var(x, lay.theta[ld.fi]), tht = var(x, lay.theta[ld.ti]);
      const FlowEval ev[4] = {evaluate_flow(ld.model.p_fr, vf, vt, thf, tht),
                              evaluate_flow(ld.model.q_fr, vf, vt, thf, tht),
                              evaluate_flow(ld.model.p_to, vt, vf, tht, thf),
                              evaluate_flow(ld.model.q_to, vt, vf, tht, thf)};
      const std::size_t rows[4] = {2 * ld.fi, 2 * ld.fi + 1, 2 * ld.ti, 2 * ld.ti + 1};
      for (int f = 0; f < 4; ++f) {
        const auto& ix = f < 2 ? fi : ti;
        g[rows[f]] -= ev[f].value;
        for (int a = 0; a < 4; ++a)
          if (ix[a] >= 0) jg(rows[f], ix[a]) -= ev[f].grad[a];
      }
      // Thermal limits at both ends.
      for (int end = 0; end < 2; ++end) {
        const auto& ep = ev[2 * end];
        const auto& eq = ev[2 * end + 1];
        const auto& ix = end == 0 ? fi : ti;
        const int row = 4 * li + end;
        h[row] = ep.value * ep.value + eq.value * eq.value - ld.limit2;
        for (int a = 0; a < 4; ++a)
          if (ix[a] >= 0) jh(row, ix[a]) += 2.0 * (ep.value * ep.grad[a] + eq.value * eq.grad[a]);
      }
      // Angle difference limits.
      const int r_up = 4 * li + 2, r_dn = 4 * li + 3;
      h[r_up] = thf - tht - ld.amax;
      h[r_dn] = ld.amin - (thf - tht);
      if (lay.theta[ld.fi] >= 0) {
        jh(r_up, lay.theta[ld.fi]) += 1.0;
        jh(r_dn, lay.theta[ld.fi]) -= 1.0;
      }
      if (lay.theta[ld.ti] >= 0) {
        jh(r_up, lay.theta[ld.ti]) -= 1.0;
        jh(r_dn, lay.theta[ld.ti]) += 1.0;
      }
    }
    // Soft lower voltage bound: vmin - vt - v <= 0.
    for (int i = 0; i < nbl; ++i) {
      const int row = 4 * nll + i;
      h[row] = net.buses()[isl.buses[i]].v_min - x[lay.vt[i]] - x[lay.v[i]];
      jh(row, lay.vt[i]) = -1.0;
      jh(row, lay.v[i]) = -1.0;
    }
  };

  nlp.hessian = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& lam, const Eigen::VectorXd& mu,
                    Eigen::MatrixXd& hess) {
    for (int li = 0; li < nll; ++li) {
      const auto& ld = lines[li];
      const auto fi = idx4(ld.fi, ld.ti), ti = idx4(ld.ti, ld.fi);
      const double vf = x[lay.v[ld.fi]], vt = x[lay.v[ld.ti]];
      const double thf = var(x, lay.theta[ld.fi]), tht = var(x, lay.theta[ld.ti]);
      const FlowEval ev[4] = {evaluate_flow(ld.model.p_fr, vf, vt, thf, tht),
                              evaluate_flow(ld.model.q_fr, vf, vt, thf, tht),
                              evaluate_flow(ld.model.p_to, vt, vf, tht, thf),
                              evaluate_flow(ld.model.q_to, vt, vf, tht, thf)};
      const std::size_t rows[4] = {2 * ld.fi, 2 * ld.fi + 1, 2 * ld.ti, 2 * ld.ti + 1};
      for (int f = 0; f < 4; ++f) {
        const auto& ix = f < 2 ? fi : ti;
        const double w = -lam[rows[f]];
        for (int a = 0; a < 4; ++a) {
          if (ix[a] < 0) continue;
          for (int b = 0; b < 4; ++b)
            if (ix[b] >= 0) hess(ix[a], ix[b]) += w * ev[f].hess[a][b];
        }
      }
      for (int end = 0; end < 2; ++end) {
        const double m = mu[4 * li + end];
        if (m == 0.0) continue;
        const auto& ep = ev[2 * end];
        const auto& eq = ev[2 * end + 1];
        const auto& ix = end == 0 ? fi : ti;
        for (int a = 0; a < 4; ++a) {
          if (ix[a] < 0) continue;
          for (int b = 0; b < 4; ++b) {
            if (ix[b] < 0) continue;
            hess(ix[a], ix[b]) += 2.0 * m *
                                  (ep.grad[a] * ep.grad[b] + ep.value * ep.hess[a][b] + eq.grad[a] * eq.grad[b] +
                                   eq.value * eq.hess[a][b]);
          }
        }
      }
    }
  };

  auto start = [&](double x_init) {
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(lay.n);
    for (int i = 0; i < nbl; ++i) {
      const auto& bus = net.buses()[isl.buses[i]];
      x0[lay.v[i]] = std::clamp(1.0, bus.v_min, bus.v_max);
      x0[lay.vt[i]] = 0.01 * bus.v_min;
    }
    for (std::size_t k = 0; k < isl.generators.size(); ++k) {
      x0[lay.pg[k]] = 0.5 * (std::max(nlp.lower[lay.pg[k]], -1e3) + std::min(nlp.upper[lay.pg[k]], 1e3));
      x0[lay.qg[k]] = 0.5 * (std::max(nlp.lower[lay.qg[k]], -1e3) + std::min(nlp.upper[lay.qg[k]], 1e3));
    }
    for (std::size_t k = 0; k < isl.demands.size(); ++k) x0[lay.x[k]] = x_init;
    return x0;
  };

  IslandSolve out;
  for (double x_init : {0.9, 0.5, 0.1}) {
    auto r = solve_ipm(nlp, start(x_init), ipm);
    out.iterations += r.iterations;
    out.x = r.x;
    if (r.converged) {
      out.converged = true;
      break;
    }
  }
  return out;
}

inline void fill_flows(const Network& net, const std::vector<char>& line_on, AcState& s) {
  const auto nl = net.lines().size();
  s.p_fr.assign(nl, 0.0);
  s.q_fr.assign(nl, 0.0);
  s.p_to.assign(nl, 0.0);
  s.q_to.assign(nl, 0.0);
  for (std::size_t l = 0; l < nl; ++l) {
    if (!line_on[l]) continue;
    const auto& line = net.lines()[l];
    const auto i = *net.bus_index(line.from_bus), j = *net.bus_index(line.to_bus);
    const auto m = line_flow_model(line);
    const double d = s.theta[i] - s.theta[j];
    s.p_fr[l] = flow_value(m.p_fr, s.v[i], s.v[j], d);
    s.q_fr[l] = flow_value(m.q_fr, s.v[i], s.v[j], d);
    s.p_to[l] = flow_value(m.p_to, s.v[j], s.v[i], -d);
    s.q_to[l] = flow_value(m.q_to, s.v[j], s.v[i], -d);
  }
}

}  // namespace detail

/// Largest violation per constraint family of `s` against `p`. Stored line
/// flows are checked against a fresh evaluation of the flow equations.
[[nodiscard]] inline ResidualReport residuals(const AcState& s, const AcOpfProblem& p) {
  const Network& net = p.network;
  const auto nb = net.buses().size(), nl = net.lines().size(), ng = net.generators().size(),
             nd = net.demands().size();
  if (s.v.size() != nb || s.theta.size() != nb || s.p_fr.size() != nl || s.pg.size() != ng || s.x.size() != nd)
    throw RipError("residuals: state dimensions do not match the problem");
  ResidualReport r;
  std::vector<double> bp(nb, 0.0), bq(nb, 0.0);
  for (std::size_t g = 0; g < ng; ++g) {
    const auto b = *net.bus_index(net.generators()[g].bus);
    bp[b] += s.pg[g];
    bq[b] += s.qg[g];
    const double on = p.gen_on[g] ? 1.0 : 0.0;
    r.limits = std::max({r.limits, on * net.generators()[g].p_min - s.pg[g], s.pg[g] - on * net.generators()[g].p_max,
                         on * p.gen_q_min[g] - s.qg[g], s.qg[g] - on * p.gen_q_max[g]});
  }
  for (std::size_t d = 0; d < nd; ++d) {
    const auto b = *net.bus_index(net.demands()[d].bus);
    bp[b] -= s.x[d] * net.demands()[d].p;
    bq[b] -= s.x[d] * net.demands()[d].q;
    r.limits = std::max({r.limits, -s.x[d], s.x[d] - (p.demand_on[d] ? 1.0 : 0.0)});
  }
  AcState fresh = s;
  detail::fill_flows(net, p.line_on, fresh);
  for (std::size_t l = 0; l < nl; ++l) {
    const auto& line = net.lines()[l];
    const auto i = *net.bus_index(line.from_bus), j = *net.bus_index(line.to_bus);
    bp[i] -= s.p_fr[l];
    bq[i] -= s.q_fr[l];
    bp[j] -= s.p_to[l];
    bq[j] -= s.q_to[l];
    r.flow = std::max({r.flow, std::abs(s.p_fr[l] - fresh.p_fr[l]), std::abs(s.q_fr[l] - fresh.q_fr[l]),
                       std::abs(s.p_to[l] - fresh.p_to[l]), std::abs(s.q_to[l] - fresh.q_to[l])});
    const double on = p.line_on[l] ? 1.0 : 0.0;
    const double lim = line.thermal_limit * on;
    r.thermal = std::max({r.thermal, std::hypot(s.p_fr[l], s.q_fr[l]) - lim, std::hypot(s.p_to[l], s.q_to[l]) - lim});
    if (p.line_on[l]) {
      const double d = s.theta[i] - s.theta[j];
      r.angle = std::max({r.angle, d - line.angle_max, line.angle_min - d});
    }
  }
  for (std::size_t b = 0; b < nb; ++b) {
    r.balance_p = std::max(r.balance_p, std::abs(bp[b]));
    r.balance_q = std::max(r.balance_q, std::abs(bq[b]));
    const auto& bus = net.buses()[b];
    const double z = p.bus_on[b] ? 1.0 : 0.0;
    r.voltage = std::max({r.voltage, s.v[b] - z * bus.v_max, z * (bus.v_min - s.v_violation[b]) - s.v[b],
                          -s.v_violation[b], -s.v[b]});
  }
  r.thermal = std::max(0.0, r.thermal);
  r.angle = std::max(0.0, r.angle);
  r.limits = std::max(0.0, r.limits);
  r.voltage = std::max(0.0, r.voltage);
  return r;
}

/// Solves one period. Elements out of service and islands without a
/// source get their forced values (zero flow, zero voltage, no service);
/// every other island is solved as its own nonlinear program.
[[nodiscard]] inline AcState solve_ac_opf(const AcOpfProblem& p, const RipOptions& opt = {}) {
  const Network& net = p.network;
  const auto nb = net.buses().size(), ng = net.generators().size(), nd = net.demands().size();
  AcState s;
  s.v.assign(nb, 0.0);
  s.theta.assign(nb, 0.0);
  s.v_violation.assign(nb, 0.0);
  s.pg.assign(ng, 0.0);
  s.qg.assign(ng, 0.0);
  s.x.assign(nd, 0.0);

  for (const auto& isl : p.islands) {
    if (!isl.has_source) {
      // No source: nothing can be served and the voltage collapses; the
      // soft lower bound absorbs the whole gap.
      for (auto b : isl.buses) s.v_violation[b] = net.buses()[b].v_min;
      continue;
    }
    const auto r = detail::solve_island(p, isl, opt.ipm);
    const auto lay = detail::layout_island(isl);
    s.converged = s.converged && r.converged;
    s.iterations += r.iterations;
    for (std::size_t i = 0; i < isl.buses.size(); ++i) {
      const auto b = isl.buses[i];
      s.theta[b] = lay.theta[i] < 0 ? 0.0 : r.x[lay.theta[i]];
      s.v[b] = r.x[lay.v[i]];
      s.v_violation[b] = std::max(0.0, r.x[lay.vt[i]]);
    }
    for (std::size_t k = 0; k < isl.generators.size(); ++k) {
      s.pg[isl.generators[k]] = r.x[lay.pg[k]];
      s.qg[isl.generators[k]] = r.x[lay.qg[k]];
    }
    for (std::size_t k = 0; k < isl.demands.size(); ++k) s.x[isl.demands[k]] = std::clamp(r.x[lay.x[k]], 0.0, 1.0);
  }
  detail::fill_flows(net, p.line_on, s);

  const double energy = net.base_mva() * p.step_hours;
  double served = 0.0, penalty = 0.0;
  for (std::size_t d = 0; d < nd; ++d) served += s.x[d] * net.demands()[d].p;
  for (std::size_t b = 0; b < nb; ++b) penalty += s.v_violation[b];
  s.objective = (served - p.penalty_weight * penalty) * energy;
  if (s.converged && residuals(s, p).max() > opt.tol) s.converged = false;
  return s;
}

struct RipResult {
  std::vector<AcState> periods;
  std::vector<ResidualReport> residual;
  std::vector<DemandId> demand_ids;
  std::vector<char> has_der;
  std::vector<double> demand_p;  // MW
  double step_hours = 1.0;
  double served_mwh = 0.0;
  double ens_mwh = 0.0;
  double total_mwh = 0.0;

  [[nodiscard]] bool all_converged() const {
    return std::all_of(periods.begin(), periods.end(), [](const AcState& s) { return s.converged; });
  }
  /// Served fractions, [demand][period].
  [[nodiscard]] std::vector<std::vector<double>> served_fraction() const {
    std::vector<std::vector<double>> x(demand_ids.size(), std::vector<double>(periods.size()));
    for (std::size_t t = 0; t < periods.size(); ++t)
      for (std::size_t d = 0; d < demand_ids.size(); ++d) x[d][t] = periods[t].x[d];
    return x;
  }
};

/// Replays `plan` on `actual`, one independent AC problem per period.
[[nodiscard]] inline RipResult simulate_plan(const EffectiveCase& actual, const RestorationPlan& plan,
                                             const RipOptions& opt = {}) {
  const Network& net = actual.network;
  RipResult res;
  res.step_hours = plan.step_hours;
  res.periods.resize(plan.n_periods);
  res.residual.resize(plan.n_periods);
  std::vector<AcOpfProblem> problems;
  for (int t = 0; t < plan.n_periods; ++t) problems.push_back(build_rip_step(actual, plan, t, opt));

  auto work = [&](int t) {
    res.periods[t] = solve_ac_opf(problems[t], opt);
    res.residual[t] = residuals(res.periods[t], problems[t]);
  };
  const int jobs = std::max(1, std::min(opt.jobs, plan.n_periods));
  if (jobs == 1) {
    for (int t = 0; t < plan.n_periods; ++t) work(t);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w)
      pool.emplace_back([&, w] {
        for (int t = w; t < plan.n_periods; t += jobs) work(t);
      });
    for (auto& th : pool) th.join();
  }

  const double energy = net.base_mva() * plan.step_hours;
  for (const auto& d : net.demands()) {
    res.demand_ids.push_back(d.id);
    res.has_der.push_back(actual.der_demand_ids.count(d.id) > 0);
    res.demand_p.push_back(d.p * net.base_mva());
  }
  for (int t = 0; t < plan.n_periods; ++t)
    for (std::size_t d = 0; d < net.demands().size(); ++d) {
      const double full = net.demands()[d].p * energy;
      res.total_mwh += full;
      res.served_mwh += res.periods[t].x[d] * full;
      res.ens_mwh += (1.0 - res.periods[t].x[d]) * full;
    }
  return res;
}

[[nodiscard]] inline nlohmann::json rip_result_to_json(const RipResult& r, const Network& net) {
  using nlohmann::json;
  json j;
  j["served_mwh"] = r.served_mwh;
  j["ens_mwh"] = r.ens_mwh;
  j["total_mwh"] = r.total_mwh;
  j["all_converged"] = r.all_converged();
  j["periods"] = json::array();
  for (std::size_t t = 0; t < r.periods.size(); ++t) {
    const auto& s = r.periods[t];
    const auto& res = r.residual[t];
    json pj;
    pj["period"] = t;
    pj["converged"] = s.converged;
    pj["objective_mwh"] = s.objective;
    pj["residuals"] = {{"balance_p", res.balance_p}, {"balance_q", res.balance_q}, {"flow", res.flow},
                       {"voltage", res.voltage},     {"thermal", res.thermal},     {"angle", res.angle},
                       {"limits", res.limits}};
    pj["buses"] = json::array();
    for (std::size_t b = 0; b < net.buses().size(); ++b)
      pj["buses"].push_back({{"id", net.buses()[b].id}, {"v", s.v[b]}, {"theta", s.theta[b]},
                             {"v_violation", s.v_violation[b]}});
    pj["lines"] = json::array();
    for (std::size_t l = 0; l < net.lines().size(); ++l)
      pj["lines"].push_back({{"id", net.lines()[l].id}, {"p_fr", s.p_fr[l]}, {"q_fr", s.q_fr[l]},
                             {"p_to", s.p_to[l]}, {"q_to", s.q_to[l]}});
    pj["generators"] = json::array();
    for (std::size_t g = 0; g < net.generators().size(); ++g)
      pj["generators"].push_back({{"id", net.generators()[g].id}, {"pg", s.pg[g]}, {"qg", s.qg[g]}});
    pj["demands"] = json::array();
    for (std::size_t d = 0; d < net.demands().size(); ++d)
      pj["demands"].push_back({{"id", net.demands()[d].id}, {"x", s.x[d]}});
    j["periods"].push_back(pj);
  }
  return j;
}

/// Served-fraction matrix as CSV: one row per demand, one column per period.
inline void write_served_csv(std::ostream& os, const RipResult& r) {
  os << "demand";
  for (std::size_t t = 0; t < r.periods.size(); ++t) os << ",t" << t;
  os << '\n';
  os.precision(10);
  for (std::size_t d = 0; d < r.demand_ids.size(); ++d) {
    os << r.demand_ids[d];
    for (std::size_t t = 0; t < r.periods.size(); ++t) os << ',' << r.periods[t].x[d];
    os << '\n';
  }
}

}  // namespace restore::rip
