#pragma once

// Bounded dual simplex on the computational form  A x - r = 0,
// lo <= (x, r) <= hi, with an LU-factored basis (Eigen SparseLU) and
// product-form eta updates between refactorizations.
//
// Variables with an infinite bound get an artificial finite bound so that
// every basis can be made dual feasible by placing nonbasic variables at
// the bound matching the sign of their reduced cost. A final point resting
// on an artificial bound with nonzero reduced cost means the true problem
// is unbounded.
//
// Pricing uses dual steepest-edge weights; the ratio test is the two-pass
// Harris test. After a run of degenerate pivots the method falls back to
// Bland's smallest-index rule until the dual objective moves again.

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "restore/milp/linear_program.hpp"

namespace restore::milp {

struct SimplexOptions {
  double primal_tol = 1e-8;
  double dual_tol = 1e-9;
  double pivot_tol = 1e-9;
  double verify_tol = 1e-7;  // on the unscaled problem
  long max_iterations = 2'000'000;
  int refactor_interval = 80;
  int bland_after = 60;
  double artificial_bound = 1e7;
  double noise_tol = 1e-6;
  bool scale = true;
};

enum class VarState : std::uint8_t { basic, at_lower, at_upper };

struct Basis {
  std::vector<int> head;
  std::vector<VarState> state;
};

class DualSimplex {
 public:
  explicit DualSimplex(const LinearProgram& lp, SimplexOptions opt = {}) : lp_(lp), opt_(opt) { setup(); }

  [[nodiscard]] int num_cols() const { return n_; }
  [[nodiscard]] int num_rows() const { return m_; }
  [[nodiscard]] long iterations() const { return iterations_; }

  /// Changes the bounds of structural column `j` (original units). The
  /// current basis is kept; the next solve() re-optimizes from it.
  void set_column_bounds(int j, double lo, double hi) {
    col_lo_[j] = lo;
    col_hi_[j] = hi;
    set_working_bounds(j, lo / cscale_[j], hi / cscale_[j]);
    if (state_[j] != VarState::basic) {
      x_[j] = state_[j] == VarState::at_lower ? lo_[j] : hi_[j];
      primal_dirty_ = true;
    }
  }

  [[nodiscard]] double column_lower(int j) const { return col_lo_[j]; }
  [[nodiscard]] double column_upper(int j) const { return col_hi_[j]; }

  [[nodiscard]] Basis basis() const { return Basis{head_, state_}; }

  void set_basis(const Basis& b) {
    head_ = b.head;
    state_ = b.state;
    for (int j = 0; j < total_; ++j)
      if (state_[j] != VarState::basic) x_[j] = state_[j] == VarState::at_lower ? lo_[j] : hi_[j];
    needs_refactor_ = true;
  }

  Solution solve() {
    Solution sol;
    const long start_iter = iterations_;
    auto status = run();
    sol.iterations = iterations_ - start_iter;
    if (status == SolveStatus::optimal) {
      sol.x.resize(n_);
      for (int j = 0; j < n_; ++j) sol.x[j] = std::clamp(x_[j] * cscale_[j], col_lo_[j], col_hi_[j]);
      sol.objective = lp_.objective_value(sol.x);
      sol.bound = sol.objective;
      // The bound/column clamp can only move values by the tolerance; check
      // the real constraint matrix before handing the point out.
      LinearProgram check = lp_;
      check.col_lower = col_lo_;
      check.col_upper = col_hi_;
      sol.max_violation = max_violation(check, sol.x);
      if (sol.max_violation > opt_.verify_tol) {
        needs_refactor_ = true;
        status = run();
        for (int j = 0; j < n_; ++j) sol.x[j] = std::clamp(x_[j] * cscale_[j], col_lo_[j], col_hi_[j]);
        sol.objective = lp_.objective_value(sol.x);
        sol.bound = sol.objective;
        sol.max_violation = max_violation(check, sol.x);
        if (status == SolveStatus::optimal && sol.max_violation > opt_.verify_tol)
          throw SolverError("simplex: solution violates constraints by " + std::to_string(sol.max_violation));
      }
    }
    sol.status = status;
    return sol;
  }

 private:
  struct Eta {
    int row;
    double pivot;
    std::vector<std::pair<int, double>> entries;  // off-pivot entries of the FTRAN'd column
  };

  void setup() {
    if (auto msg = lp_.check(); !msg.empty()) throw SolverError("simplex: malformed LP: " + msg);
    n_ = lp_.num_cols();
    m_ = lp_.num_rows();
    total_ = n_ + m_;
    col_lo_ = lp_.col_lower;
    col_hi_ = lp_.col_upper;
    sign_ = lp_.sense == Sense::maximize ? -1.0 : 1.0;

    // Merge duplicate triplets into CSC.
    std::vector<std::vector<std::pair<int, double>>> cols(n_);
    for (const auto& t : lp_.entries) cols[t.col].push_back({t.row, t.value});
    for (auto& c : cols) {
      std::sort(c.begin(), c.end());
      std::vector<std::pair<int, double>> merged;
      for (auto [r, v] : c) {
        if (!merged.empty() && merged.back().first == r) merged.back().second += v;
        else merged.push_back({r, v});
      }
      std::erase_if(merged, [](auto& p) { return p.second == 0.0; });
      c = std::move(merged);
    }

    rscale_.assign(m_, 1.0);
    cscale_.assign(n_, 1.0);
    if (opt_.scale) compute_scaling(cols);

    col_start_.assign(n_ + 1, 0);
    for (int j = 0; j < n_; ++j) col_start_[j + 1] = col_start_[j] + static_cast<int>(cols[j].size());
    row_idx_.resize(col_start_[n_]);
    val_.resize(col_start_[n_]);
    for (int j = 0; j < n_; ++j) {
      int k = col_start_[j];
      for (auto [r, v] : cols[j]) {
        row_idx_[k] = r;
        val_[k] = v * rscale_[r] * cscale_[j];
        ++k;
      }
    }
    // CSR copy for row-wise pivot row computation.
    row_start_.assign(m_ + 1, 0);
    for (int k = 0; k < col_start_[n_]; ++k) ++row_start_[row_idx_[k] + 1];
    for (int i = 0; i < m_; ++i) row_start_[i + 1] += row_start_[i];
    csr_col_.resize(col_start_[n_]);
    csr_val_.resize(col_start_[n_]);
    {
      std::vector<int> fill(row_start_.begin(), row_start_.end() - 1);
      for (int j = 0; j < n_; ++j)
        for (int k = col_start_[j]; k < col_start_[j + 1]; ++k) {
          const int pos = fill[row_idx_[k]]++;
          csr_col_[pos] = j;
          csr_val_[pos] = val_[k];
        }
    }

    cost_.assign(total_, 0.0);
    for (int j = 0; j < n_; ++j) cost_[j] = sign_ * lp_.objective[j] * cscale_[j];

    lo_.assign(total_, 0.0);
    hi_.assign(total_, 0.0);
    art_lo_.assign(total_, false);
    art_hi_.assign(total_, false);
    for (int j = 0; j < n_; ++j) set_working_bounds(j, col_lo_[j] / cscale_[j], col_hi_[j] / cscale_[j]);
    for (int i = 0; i < m_; ++i)
      set_working_bounds(n_ + i, lp_.row_lower[i] * rscale_[i], lp_.row_upper[i] * rscale_[i]);

    // Slack basis; nonbasic structurals at the bound favoured by their cost.
    head_.resize(m_);
    state_.assign(total_, VarState::at_lower);
    x_.assign(total_, 0.0);
    for (int i = 0; i < m_; ++i) {
      head_[i] = n_ + i;
      state_[n_ + i] = VarState::basic;
    }
    for (int j = 0; j < n_; ++j) {
      state_[j] = cost_[j] >= 0.0 ? VarState::at_lower : VarState::at_upper;
      x_[j] = state_[j] == VarState::at_lower ? lo_[j] : hi_[j];
    }
    weights_.assign(m_, 1.0);
    needs_refactor_ = true;
  }

  void set_working_bounds(int j, double lo, double hi) {
    const double big = opt_.artificial_bound;
    art_lo_[j] = !std::isfinite(lo);
    art_hi_[j] = !std::isfinite(hi);
    lo_[j] = art_lo_[j] ? -big : lo;
    hi_[j] = art_hi_[j] ? big : hi;
    if (art_lo_[j] && !art_hi_[j]) lo_[j] = std::min(-big, hi - big);
    if (art_hi_[j] && !art_lo_[j]) hi_[j] = std::max(big, lo + big);
  }

  // Geometric-mean row/column scaling, a few passes, powers of two.
  void compute_scaling(const std::vector<std::vector<std::pair<int, double>>>& cols) {
    std::vector<double> rmin(m_), rmax(m_);
    for (int pass = 0; pass < 6; ++pass) {
      std::fill(rmin.begin(), rmin.end(), kInf);
      std::fill(rmax.begin(), rmax.end(), 0.0);
      for (int j = 0; j < n_; ++j)
        for (auto [r, v] : cols[j]) {
          const double a = std::abs(v) * cscale_[j];
          rmin[r] = std::min(rmin[r], a);
          rmax[r] = std::max(rmax[r], a);
        }
      for (int i = 0; i < m_; ++i)
        if (rmax[i] > 0.0) rscale_[i] = pow2(1.0 / std::sqrt(rmin[i] * rmax[i]));
      for (int j = 0; j < n_; ++j) {
        double cmin = kInf, cmax = 0.0;
        for (auto [r, v] : cols[j]) {
          const double a = std::abs(v) * rscale_[r];
          cmin = std::min(cmin, a);
          cmax = std::max(cmax, a);
        }
        if (cmax > 0.0) cscale_[j] = pow2(1.0 / std::sqrt(cmin * cmax));
      }
    }
  }

  static double pow2(double v) { return std::exp2(std::round(std::log2(v))); }

  // ---- basis factorization ------------------------------------------------

  bool refactor() {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(m_ * 3);
    for (int k = 0; k < m_; ++k) {
      const int j = head_[k];
      if (j < n_) {
        for (int p = col_start_[j]; p < col_start_[j + 1]; ++p) trips.emplace_back(row_idx_[p], k, val_[p]);
      } else {
        trips.emplace_back(j - n_, k, -1.0);
      }
    }
    Eigen::SparseMatrix<double> B(m_, m_);
    B.setFromTriplets(trips.begin(), trips.end());
    B.makeCompressed();
    lu_ = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>>>();
    lu_->analyzePattern(B);
    lu_->factorize(B);
    etas_.clear();
    needs_refactor_ = false;
    return lu_->info() == Eigen::Success;
  }

  void ftran(Eigen::VectorXd& v) const {
    v = lu_->solve(v).eval();
    for (const auto& e : etas_) {
      const double yr = v[e.row] / e.pivot;
      v[e.row] = yr;
      if (yr != 0.0)
        for (auto [i, a] : e.entries) v[i] -= a * yr;
    }
  }

  void btran(Eigen::VectorXd& v) const {
    for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
      double s = v[it->row];
      for (auto [i, a] : it->entries) s -= a * v[i];
      v[it->row] = s / it->pivot;
    }
    v = lu_->transpose().solve(v).eval();
  }

  // ---- primal / dual values -----------------------------------------------

  void compute_primal() {
    // B x_B = -N x_N  (A x - r = 0)
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m_);
    for (int j = 0; j < total_; ++j) {
      if (state_[j] == VarState::basic || x_[j] == 0.0) continue;
      if (j < n_) {
        for (int p = col_start_[j]; p < col_start_[j + 1]; ++p) rhs[row_idx_[p]] -= val_[p] * x_[j];
      } else {
        rhs[j - n_] += x_[j];
      }
    }
    ftran(rhs);
    for (int k = 0; k < m_; ++k) x_[head_[k]] = rhs[k];
    primal_dirty_ = false;
  }

  void compute_dual() {
    Eigen::VectorXd y(m_);
    for (int k = 0; k < m_; ++k) y[k] = cost_[head_[k]];
    btran(y);
    d_.assign(total_, 0.0);
    for (int j = 0; j < n_; ++j) {
      if (state_[j] == VarState::basic) continue;
      double s = cost_[j];
      for (int p = col_start_[j]; p < col_start_[j + 1]; ++p) s -= val_[p] * y[row_idx_[p]];
      d_[j] = s;
    }
    for (int i = 0; i < m_; ++i)
      if (state_[n_ + i] != VarState::basic) d_[n_ + i] = y[i];
  }

  // Puts every nonbasic variable on the bound its reduced cost calls for.
  bool restore_dual_feasibility() {
    bool flipped = false;
    for (int j = 0; j < total_; ++j) {
      if (state_[j] == VarState::basic) continue;
      if (lo_[j] == hi_[j]) {
        x_[j] = lo_[j];
        continue;
      }
      if (state_[j] == VarState::at_lower && d_[j] < -opt_.dual_tol) {
        state_[j] = VarState::at_upper;
        x_[j] = hi_[j];
        flipped = true;
      } else if (state_[j] == VarState::at_upper && d_[j] > opt_.dual_tol) {
        state_[j] = VarState::at_lower;
        x_[j] = lo_[j];
        flipped = true;
      }
    }
    return flipped;
  }

  double dual_objective() const {
    double v = 0.0;
    for (int j = 0; j < total_; ++j) v += cost_[j] * x_[j];
    return v;
  }

  bool reinitialize() {
    if (!refactor()) {
      // Singular basis: fall back to the slack basis.
      for (int j = 0; j < total_; ++j)
        if (state_[j] == VarState::basic) state_[j] = VarState::at_lower;
      for (int i = 0; i < m_; ++i) {
        head_[i] = n_ + i;
        state_[n_ + i] = VarState::basic;
      }
      weights_.assign(m_, 1.0);
      if (!refactor()) return false;
    }
    compute_dual();
    restore_dual_feasibility();
    for (int j = 0; j < total_; ++j)
      if (state_[j] != VarState::basic) x_[j] = state_[j] == VarState::at_lower ? lo_[j] : hi_[j];
    compute_primal();
    return true;
  }

  // ---- main loop ------------------------------------------------------------

  SolveStatus run() {
    if (m_ == 0) return solve_without_rows();
    if (needs_refactor_ || !lu_) {
      if (!reinitialize()) throw SolverError("simplex: basis factorization failed");
    } else {
      compute_dual();
      if (restore_dual_feasibility()) primal_dirty_ = true;
      if (primal_dirty_) compute_primal();
    }

    ignored_.assign(total_, 0);
    Eigen::VectorXd rho(m_), col(m_), tau(m_);
    std::vector<double> alpha(total_, 0.0);
    std::vector<int> alpha_nz;
    std::vector<char> in_alpha(total_, 0);
    int since_refactor = 0;
    int stall = 0;
    bool bland = false;
    bool fresh = true;
    double last_obj = -kInf;

    for (;;) {
      if (iterations_ >= opt_.max_iterations) throw SolverError("simplex: iteration limit reached");

      // Leaving row.
      int r = -1;
      double best = 0.0;
      for (int k = 0; k < m_; ++k) {
        const int j = head_[k];
        if (ignored_[j]) continue;
        double inf = 0.0;
        if (x_[j] < lo_[j] - opt_.primal_tol) inf = lo_[j] - x_[j];
        else if (x_[j] > hi_[j] + opt_.primal_tol) inf = x_[j] - hi_[j];
        if (inf == 0.0) continue;
        if (bland) {
          if (r < 0 || j < head_[r]) r = k;
          continue;
        }
        const double score = inf * inf / weights_[k];
        if (score > best) {
          best = score;
          r = k;
        }
      }
      if (r < 0) {
        if (!refresh_and_check()) continue;
        return finish_optimal();
      }

      const int leaving = head_[r];
      const bool to_lower = x_[leaving] < lo_[leaving];
      const double delta = to_lower ? x_[leaving] - lo_[leaving] : x_[leaving] - hi_[leaving];

      // Pivot row: rho = e_r^T B^-1, alpha_j = rho . a_j.
      rho.setZero();
      rho[r] = 1.0;
      btran(rho);
      for (int j : alpha_nz) {
        alpha[j] = 0.0;
        in_alpha[j] = 0;
      }
      alpha_nz.clear();
      for (int i = 0; i < m_; ++i) {
        const double ri = rho[i];
        if (std::abs(ri) < 1e-14) continue;
        for (int p = row_start_[i]; p < row_start_[i + 1]; ++p) {
          const int j = csr_col_[p];
          if (state_[j] == VarState::basic) continue;
          if (!in_alpha[j]) {
            in_alpha[j] = 1;
            alpha_nz.push_back(j);
          }
          alpha[j] += ri * csr_val_[p];
        }
        const int lj = n_ + i;
        if (state_[lj] != VarState::basic) {
          if (!in_alpha[lj]) {
            in_alpha[lj] = 1;
            alpha_nz.push_back(lj);
          }
          alpha[lj] -= ri;
        }
      }

      // Harris ratio test.
      auto eligible = [&](int j) {
        if (lo_[j] == hi_[j]) return false;
        const double a = alpha[j];
        if (std::abs(a) < opt_.pivot_tol) return false;
        const bool at_lower = state_[j] == VarState::at_lower;
        // delta < 0: x_r must rise, so x_j moves with -a*dx_j > 0.
        if (delta < 0) return at_lower ? a < 0 : a > 0;
        return at_lower ? a > 0 : a < 0;
      };
      double bound1 = kInf;
      for (int j : alpha_nz) {
        if (!eligible(j)) continue;
        const double ratio = (std::abs(d_[j]) + opt_.dual_tol) / std::abs(alpha[j]);
        bound1 = std::min(bound1, ratio);
      }
      if (bound1 == kInf) {
        // Confirm on fresh values before calling the problem infeasible. A
        // row that misses its bound by round-off alone is no proof either;
        // it is left out of pricing until the next refresh.
        if (!fresh) {
          if (!reinitialize()) throw SolverError("simplex: basis factorization failed");
          since_refactor = 0;
          fresh = true;
          continue;
        }
        if (std::abs(delta) <= opt_.noise_tol) {
          ignored_[leaving] = 1;
          continue;
        }
        return SolveStatus::infeasible;
      }
      int q = -1;
      double best_alpha = 0.0;
      for (int j : alpha_nz) {
        if (!eligible(j)) continue;
        const double ratio = std::abs(d_[j]) / std::abs(alpha[j]);
        if (ratio > bound1) continue;
        if (bland) {
          if (q < 0 || j < q) q = j;
        } else if (std::abs(alpha[j]) > best_alpha) {
          best_alpha = std::abs(alpha[j]);
          q = j;
        }
      }
      if (q < 0) {
        if (!fresh) {
          if (!reinitialize()) throw SolverError("simplex: basis factorization failed");
          since_refactor = 0;
          fresh = true;
          continue;
        }
        if (std::abs(delta) <= opt_.noise_tol) {
          ignored_[leaving] = 1;
          continue;
        }
        return SolveStatus::infeasible;
      }

      const double alpha_rq = alpha[q];
      const double theta_d = d_[q] / alpha_rq;

      // Entering column.
      col.setZero();
      if (q < n_) {
        for (int p = col_start_[q]; p < col_start_[q + 1]; ++p) col[row_idx_[p]] = val_[p];
      } else {
        col[q - n_] = -1.0;
      }
      ftran(col);
      if (std::abs(col[r] - alpha_rq) > 1e-6 * (1.0 + std::abs(alpha_rq))) {
        // Row and column disagree; rebuild and try again.
        if (!reinitialize()) throw SolverError("simplex: basis factorization failed");
        since_refactor = 0;
        continue;
      }

      // Dual steepest-edge reference vector.
      tau = rho;
      ftran(tau);
      const double beta_r = std::max(rho.squaredNorm(), 1e-12);

      // Dual update.
      for (int j : alpha_nz) d_[j] -= theta_d * alpha[j];
      d_[q] = 0.0;
      d_[leaving] = -theta_d;

      // Primal update.
      const double theta_p = delta / col[r];
      for (int k = 0; k < m_; ++k) x_[head_[k]] -= theta_p * col[k];
      x_[q] += theta_p;
      x_[leaving] = to_lower ? lo_[leaving] : hi_[leaving];

      for (int k = 0; k < m_; ++k) {
        if (k == r || col[k] == 0.0) continue;
        const double ratio = col[k] / col[r];
        weights_[k] = std::max(weights_[k] - 2.0 * ratio * tau[k] + ratio * ratio * beta_r, 1e-8);
      }
      weights_[r] = std::max(beta_r / (col[r] * col[r]), 1e-8);

      Eta eta{r, col[r], {}};
      for (int k = 0; k < m_; ++k)
        if (k != r && std::abs(col[k]) > 1e-14) eta.entries.push_back({k, col[k]});
      etas_.push_back(std::move(eta));

      state_[q] = VarState::basic;
      ignored_[q] = 0;
      fresh = false;
      state_[leaving] = to_lower ? VarState::at_lower : VarState::at_upper;
      if (lo_[leaving] == hi_[leaving]) state_[leaving] = VarState::at_lower;
      head_[r] = q;
      ++iterations_;

      const double obj = dual_objective();
      if (obj > last_obj + 1e-12 * (1.0 + std::abs(obj))) {
        last_obj = obj;
        stall = 0;
        bland = false;
      } else if (++stall > opt_.bland_after) {
        bland = true;
      }

      if (++since_refactor >= opt_.refactor_interval) {
        if (!reinitialize()) throw SolverError("simplex: basis factorization failed");
        since_refactor = 0;
      }
    }
  }

  // Recomputes everything from a fresh factorization; returns true when the
  // current basis is still optimal.
  bool refresh_and_check() {
    if (!reinitialize()) throw SolverError("simplex: basis factorization failed");
    bool ok = true;
    for (int k = 0; k < m_; ++k) {
      const int j = head_[k];
      const double inf = std::max(lo_[j] - x_[j], x_[j] - hi_[j]);
      if (inf <= opt_.primal_tol) continue;
      if (ignored_[j] && inf <= opt_.noise_tol) continue;
      ignored_[j] = 0;
      ok = false;
    }
    return ok;
  }

  SolveStatus finish_optimal() {
    for (int j = 0; j < total_; ++j) {
      if (state_[j] == VarState::basic) continue;
      const bool on_art = (state_[j] == VarState::at_lower && art_lo_[j]) ||
                          (state_[j] == VarState::at_upper && art_hi_[j]);
      if (on_art && std::abs(d_[j]) > opt_.dual_tol) return SolveStatus::unbounded;
    }
    return SolveStatus::optimal;
  }

  SolveStatus solve_without_rows() {
    for (int j = 0; j < n_; ++j) {
      const double c = cost_[j];
      if (c > 0 && art_lo_[j]) return SolveStatus::unbounded;
      if (c < 0 && art_hi_[j]) return SolveStatus::unbounded;
      x_[j] = c >= 0 ? lo_[j] : hi_[j];
      if (c == 0 && art_lo_[j]) x_[j] = art_hi_[j] ? 0.0 : hi_[j];
    }
    return SolveStatus::optimal;
  }

  const LinearProgram& lp_;
  SimplexOptions opt_;
  int n_ = 0, m_ = 0, total_ = 0;
  double sign_ = 1.0;
  std::vector<double> col_lo_, col_hi_;
  std::vector<double> rscale_, cscale_;
  std::vector<int> col_start_, row_idx_;
  std::vector<double> val_;
  std::vector<int> row_start_, csr_col_;
  std::vector<double> csr_val_;
  std::vector<double> cost_, lo_, hi_;
  std::vector<bool> art_lo_, art_hi_;
  std::vector<int> head_;
  std::vector<VarState> state_;
  std::vector<double> x_, d_, weights_;
  std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>>> lu_;
  std::vector<Eta> etas_;
  bool needs_refactor_ = true;
  bool primal_dirty_ = false;
  std::vector<char> ignored_;
  long iterations_ = 0;
};

/// Solves `lp` with the built-in dual simplex. Throws SolverError on
/// numerical failure.
[[nodiscard]] inline Solution solve_lp(const LinearProgram& lp, double feasibility_tol = 1e-7) {
  SimplexOptions opt;
  opt.verify_tol = feasibility_tol;
  DualSimplex simplex(lp, opt);
  return simplex.solve();
}

}  // namespace restore::milp
