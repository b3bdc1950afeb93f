#pragma once

// AC branch flows in polar form. Each of the four directed quantities of a
// line (P and Q at either end) has the shape
//
//   F = A Vs^2 + Vs Vo (C cos d + S sin d),   d = theta_s - theta_o
//
// where s is the sending end and o the other end. The coefficients follow
// from the series admittance g + jb, the end shunts and the complex tap.

#include <array>
#include <cmath>

#include "restore/network.hpp"

namespace restore::rip {

struct FlowCoefficients {
  double a = 0.0;
  double c = 0.0;
  double s = 0.0;
};

/// The four flow shapes of a line: active and reactive, from and to end.
struct LineFlowModel {
  FlowCoefficients p_fr, q_fr, p_to, q_to;
};

[[nodiscard]] inline LineFlowModel line_flow_model(const Line& l) {
  const double tm2 = l.tap_r * l.tap_r + l.tap_i * l.tap_i;
  const double g = l.g, b = l.b, tr = l.tap_r, ti = l.tap_i;
  LineFlowModel m;
  m.p_fr = {(g + l.g_fr) / tm2, (-g * tr + b * ti) / tm2, (-b * tr - g * ti) / tm2};
  m.q_fr = {-(b + l.b_fr) / tm2, (b * tr + g * ti) / tm2, (-g * tr + b * ti) / tm2};
  m.p_to = {g + l.g_to, (-g * tr - b * ti) / tm2, (-b * tr + g * ti) / tm2};
  m.q_to = {-(b + l.b_to), (b * tr - g * ti) / tm2, (-g * tr - b * ti) / tm2};
  return m;
}

/// Value, gradient and Hessian of one flow shape with respect to
/// (Vs, Vo, theta_s, theta_o).
struct FlowEval {
  double value = 0.0;
  std::array<double, 4> grad{};
  std::array<std::array<double, 4>, 4> hess{};
};

[[nodiscard]] inline double flow_value(const FlowCoefficients& k, double vs, double vo, double d) {
  return k.a * vs * vs + vs * vo * (k.c * std::cos(d) + k.s * std::sin(d));
}

[[nodiscard]] inline FlowEval evaluate_flow(const FlowCoefficients& k, double vs, double vo, double th_s,
                                            double th_o) {
  const double d = th_s - th_o;
  const double cs = std::cos(d), sn = std::sin(d);
  const double kk = k.c * cs + k.s * sn;     // K
  const double kd = -k.c * sn + k.s * cs;    // dK/dd
  FlowEval e;
  e.value = k.a * vs * vs + vs * vo * kk;
  const double f_d = vs * vo * kd;
  e.grad = {2.0 * k.a * vs + vo * kk, vs * kk, f_d, -f_d};
  // Second derivatives in (Vs, Vo, d); d = th_s - th_o maps with signs.
  const double f_vsvs = 2.0 * k.a;
  const double f_vsvo = kk;
  const double f_vsd = vo * kd;
  const double f_vod = vs * kd;
  const double f_dd = -vs * vo * kk;
  auto& h = e.hess;
  h[0][0] = f_vsvs;
  h[0][1] = h[1][0] = f_vsvo;
  h[1][1] = 0.0;
  h[0][2] = h[2][0] = f_vsd;
  h[0][3] = h[3][0] = -f_vsd;
  h[1][2] = h[2][1] = f_vod;
  h[1][3] = h[3][1] = -f_vod;
  h[2][2] = f_dd;
  h[3][3] = f_dd;
  h[2][3] = h[3][2] = -f_dd;
  return e;
}

}  // namespace restore::rip
