#pragma once

// Dense primal-dual interior point method for
//
//   min c'x   s.t.  g(x) = 0,  h(x) <= 0,  lo <= x <= hi
//
// with user-supplied first and second derivatives. Variable bounds are kept
// apart from h so their slacks only touch the diagonal of the reduced
// Hessian. Newton steps solve the symmetric indefinite KKT system directly.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace restore::rip {

struct NlpProblem {
  int n = 0;
  int n_eq = 0;
  int n_ineq = 0;
  Eigen::VectorXd cost;  // linear objective
  Eigen::VectorXd lower, upper;  // may hold +-infinity
  /// Fills g (n_eq), its Jacobian (n_eq x n), h (n_ineq) and its Jacobian.
  std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& g, Eigen::MatrixXd& jg, Eigen::VectorXd& h,
                     Eigen::MatrixXd& jh)>
      constraints;
  /// Adds sum_k lam_k Hess g_k + sum_k mu_k Hess h_k to `hess` (n x n).
  std::function<void(const Eigen::VectorXd& x, const Eigen::VectorXd& lam, const Eigen::VectorXd& mu,
                     Eigen::MatrixXd& hess)>
      hessian;
};

struct IpmOptions {
  double feasibility_tol = 1e-9;
  double gradient_tol = 1e-7;
  double complementarity_tol = 1e-9;
  int max_iterations = 200;
  double step_fraction = 0.99995;
  double centering = 0.1;
};

struct IpmResult {
  Eigen::VectorXd x, lam, mu;
  double objective = 0.0;
  double max_equality = 0.0;
  double max_inequality = 0.0;
  int iterations = 0;
  bool converged = false;
};

[[nodiscard]] inline IpmResult solve_ipm(const NlpProblem& p, Eigen::VectorXd x0, const IpmOptions& opt = {}) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const int n = p.n, nh = p.n_ineq;

  // Fixed variables become equality rows; the interior of an empty box is
  // empty.
  std::vector<int> lb_idx, ub_idx, fixed_idx;
  for (int j = 0; j < n; ++j) {
    if (p.lower[j] == p.upper[j]) {
      fixed_idx.push_back(j);
      continue;
    }
    if (std::isfinite(p.lower[j])) lb_idx.push_back(j);
    if (std::isfinite(p.upper[j])) ub_idx.push_back(j);
  }
  const int nl = static_cast<int>(lb_idx.size()), nu = static_cast<int>(ub_idx.size());
  const int niq = nh + nl + nu;
  const int neq = p.n_eq + static_cast<int>(fixed_idx.size());

  VectorXd x = std::move(x0);
  VectorXd g(neq), h(nh);
  MatrixXd jg(neq, n), jh(nh, n);
  auto eval = [&] {
    g.setZero();
    h.setZero();
    jg.setZero();
    jh.setZero();
    VectorXd gu = VectorXd::Zero(p.n_eq);
    MatrixXd jgu = MatrixXd::Zero(p.n_eq, n);
    p.constraints(x, gu, jgu, h, jh);
    g.head(p.n_eq) = gu;
    jg.topRows(p.n_eq) = jgu;
    for (std::size_t k = 0; k < fixed_idx.size(); ++k) {
      g[p.n_eq + k] = x[fixed_idx[k]] - p.lower[fixed_idx[k]];
      jg(p.n_eq + k, fixed_idx[k]) = 1.0;
    }
  };
  // All inequality values stacked: general rows, lower bounds, upper bounds.
  auto stacked = [&] {
    VectorXd all(niq);
    all.head(nh) = h;
    for (int k = 0; k < nl; ++k) all[nh + k] = p.lower[lb_idx[k]] - x[lb_idx[k]];
    for (int k = 0; k < nu; ++k) all[nh + nl + k] = x[ub_idx[k]] - p.upper[ub_idx[k]];
    return all;
  };

  eval();
  VectorXd hv = stacked();
  VectorXd z = VectorXd::Ones(niq);
  for (int k = 0; k < niq; ++k) z[k] = std::max(1.0, -hv[k]);
  double gamma = 1.0;
  VectorXd mu = VectorXd::Constant(niq, gamma).cwiseQuotient(z);
  VectorXd lam = VectorXd::Zero(neq);

  IpmResult res;
  MatrixXd hess(n, n), kkt(n + neq, n + neq);
  VectorXd rhs(n + neq);

  auto lagrangian_gradient = [&] {
    VectorXd lx = p.cost;
    if (neq) lx.noalias() += jg.transpose() * lam;
    if (nh) lx.noalias() += jh.transpose() * mu.head(nh);
    for (int k = 0; k < nl; ++k) lx[lb_idx[k]] -= mu[nh + k];
    for (int k = 0; k < nu; ++k) lx[ub_idx[k]] += mu[nh + nl + k];
    return lx;
  };

  for (int it = 0; it <= opt.max_iterations; ++it) {
    const VectorXd lx = lagrangian_gradient();
    const double feas = std::max(neq ? g.cwiseAbs().maxCoeff() : 0.0, niq ? std::max(0.0, hv.maxCoeff()) : 0.0);
    const double lam_norm = std::max(neq ? lam.cwiseAbs().maxCoeff() : 0.0, niq ? mu.cwiseAbs().maxCoeff() : 0.0);
    const double grad = lx.cwiseAbs().maxCoeff() / (1.0 + lam_norm);
    const double comp = niq ? z.dot(mu) / (1.0 + x.cwiseAbs().maxCoeff()) : 0.0;
    res.iterations = it;
    if (!x.allFinite()) break;
    if (feas <= opt.feasibility_tol && grad <= opt.gradient_tol && comp <= opt.complementarity_tol) {
      res.converged = true;
      break;
    }
    if (it == opt.max_iterations) break;

    hess.setZero();
    p.hessian(x, lam.head(p.n_eq), mu.head(nh), hess);
    const VectorXd zinv = z.cwiseInverse();
    VectorXd wh(nh);
    for (int k = 0; k < nh; ++k) wh[k] = mu[k] * zinv[k];
    if (nh) hess.noalias() += jh.transpose() * wh.asDiagonal() * jh;
    for (int k = 0; k < nl; ++k) hess(lb_idx[k], lb_idx[k]) += mu[nh + k] * zinv[nh + k];
    for (int k = 0; k < nu; ++k) hess(ub_idx[k], ub_idx[k]) += mu[nh + nl + k] * zinv[nh + nl + k];

    VectorXd nvec = lx;
    VectorXd t(niq);
    for (int k = 0; k < niq; ++k) t[k] = (mu[k] * hv[k] + gamma) * zinv[k];
    if (nh) nvec.noalias() += jh.transpose() * t.head(nh);
    for (int k = 0; k < nl; ++k) nvec[lb_idx[k]] -= t[nh + k];
    for (int k = 0; k < nu; ++k) nvec[ub_idx[k]] += t[nh + nl + k];

    kkt.setZero();
    kkt.topLeftCorner(n, n) = hess;
    if (neq) {
      kkt.topRightCorner(n, neq) = jg.transpose();
      kkt.bottomLeftCorner(neq, n) = jg;
    }
    rhs.head(n) = -nvec;
    rhs.tail(neq) = -g;
    VectorXd step = kkt.partialPivLu().solve(rhs);
    // Singular systems (flat directions, dependent rows) get a growing
    // primal-dual regularization.
    auto solved = [&](const MatrixXd& m) {
      return step.allFinite() && (m * step - rhs).norm() <= 1e-8 * (1.0 + rhs.norm());
    };
    for (double delta = 1e-10; delta <= 1e-2 && !solved(kkt); delta *= 100.0) {
      MatrixXd reg = kkt;
      reg.diagonal().head(n).array() += delta;
      reg.diagonal().tail(neq).array() -= delta;
      step = reg.partialPivLu().solve(rhs);
      if (solved(reg)) break;
    }
    if (!step.allFinite()) break;
    const VectorXd dx = step.head(n);
    const VectorXd dlam = step.tail(neq);

    VectorXd dhdx(niq);
    if (nh) dhdx.head(nh) = jh * dx;
    for (int k = 0; k < nl; ++k) dhdx[nh + k] = -dx[lb_idx[k]];
    for (int k = 0; k < nu; ++k) dhdx[nh + nl + k] = dx[ub_idx[k]];
    const VectorXd dz = -hv - z - dhdx;
    VectorXd dmu(niq);
    for (int k = 0; k < niq; ++k) dmu[k] = -mu[k] + zinv[k] * (gamma - mu[k] * dz[k]);

    double ap = 1.0, ad = 1.0;
    for (int k = 0; k < niq; ++k) {
      if (dz[k] < 0.0) ap = std::min(ap, opt.step_fraction * z[k] / -dz[k]);
      if (dmu[k] < 0.0) ad = std::min(ad, opt.step_fraction * mu[k] / -dmu[k]);
    }
    x += ap * dx;
    z += ap * dz;
    lam += ad * dlam;
    mu += ad * dmu;
    if (niq) gamma = opt.centering * z.dot(mu) / niq;

    eval();
    hv = stacked();
  }

  res.x = x;
  res.lam = lam;
  res.mu = mu;
  res.objective = p.cost.dot(x);
  res.max_equality = neq ? g.cwiseAbs().maxCoeff() : 0.0;
  res.max_inequality = niq ? std::max(0.0, hv.maxCoeff()) : 0.0;
  return res;
}

}  // namespace restore::rip
