#include "stackprice/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace stackprice {

const char* to_string(LpStatus status) {
  switch (status) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
    case LpStatus::IterationLimit: return "iteration_limit";
  }
  return "unknown";
}

double lp_infeasibility(const LpProblem& problem, const Vec& x) {
  double worst = 0.0;
  if (problem.A_ub.rows() > 0) {
    const Vec slack = problem.A_ub * x - problem.b_ub;
    worst = std::max(worst, slack.maxCoeff());
  }
  if (problem.A_eq.rows() > 0) {
    worst = std::max(worst, (problem.A_eq * x - problem.b_eq).cwiseAbs().maxCoeff());
  }
  return std::max(worst, 0.0);
}

namespace {

using Tableau = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Consecutive degenerate pivots tolerated under Dantzig pricing before
// switching to Bland's rule for the rest of the phase.
constexpr int kDegenerateStall = 30;

class Simplex {
 public:
  Simplex(const LpProblem& p, const LpOptions& opt) : opt_(opt) { build(p); }

  LpResult run() {
    LpResult result;
    if (trivially_infeasible_) {
      result.status = LpStatus::Infeasible;
      return result;
    }

    set_phase_one_costs();
    LpStatus st = iterate(/*allow_artificial=*/true);
    result.pivots = pivots_;
    if (st == LpStatus::IterationLimit) {
      result.status = st;
      return result;
    }
    const double infeasibility = -T_(m_, rhs_col());
    if (infeasibility > feas_tol_ * std::max<double>(1, m_)) {
      result.status = LpStatus::Infeasible;
      return result;
    }
    drive_out_artificials();

    set_phase_two_costs();
    st = iterate(/*allow_artificial=*/false);
    result.pivots = pivots_;
    if (st != LpStatus::Optimal) {
      result.status = st;
      return result;
    }

    Vec y = Vec::Zero(num_cols_);
    for (int i = 0; i < m_; ++i) y(basis_[i]) = T_(i, rhs_col());
    result.x = y.head(n_) - y.segment(n_, n_);
    result.objective = c_.dot(result.x);
    result.status = LpStatus::Optimal;
    return result;
  }

 private:
  int rhs_col() const { return num_cols_; }
  bool is_artificial(int j) const { return j >= first_artificial_; }

  void build(const LpProblem& p) {
    n_ = static_cast<int>(p.c.size());
    c_ = p.c;
    const int m_ub = static_cast<int>(p.A_ub.rows());
    const int m_eq = static_cast<int>(p.A_eq.rows());
    require(m_ub == 0 || p.A_ub.cols() == n_, "solve_lp: A_ub column count mismatch");
    require(m_eq == 0 || p.A_eq.cols() == n_, "solve_lp: A_eq column count mismatch");
    require(p.b_ub.size() == m_ub, "solve_lp: b_ub length mismatch");
    require(p.b_eq.size() == m_eq, "solve_lp: b_eq length mismatch");

    // Rows are equilibrated to unit max-norm; all-zero rows are checked and
    // dropped here.
    struct Row {
      Vec a;
      double b;
      bool inequality;
    };
    std::vector<Row> rows;
    double bmax = 0.0;
    auto push = [&](const Vec& a, double b, bool ineq) {
      const double scale = a.size() ? a.cwiseAbs().maxCoeff() : 0.0;
      if (scale <= 0.0) {
        const bool ok = ineq ? (b >= -opt_.tolerance) : (std::abs(b) <= opt_.tolerance);
        if (!ok) trivially_infeasible_ = true;
        return;
      }
      rows.push_back({a / scale, b / scale, ineq});
      bmax = std::max(bmax, std::abs(b / scale));
    };
    for (int i = 0; i < m_ub; ++i) push(p.A_ub.row(i).transpose(), p.b_ub(i), true);
    for (int i = 0; i < m_eq; ++i) push(p.A_eq.row(i).transpose(), p.b_eq(i), false);
    feas_tol_ = opt_.tolerance * (1.0 + bmax);

    m_ = static_cast<int>(rows.size());
    int num_slack = 0;
    for (const auto& r : rows) num_slack += r.inequality ? 1 : 0;
    first_artificial_ = 2 * n_ + num_slack;
    num_cols_ = first_artificial_ + m_;

    T_ = Tableau::Zero(m_ + 1, num_cols_ + 1);
    basis_.assign(m_, -1);
    int slack = 2 * n_;
    for (int i = 0; i < m_; ++i) {
      const auto& r = rows[i];
      const double sign = r.b < 0.0 ? -1.0 : 1.0;
      T_.row(i).head(n_) = sign * r.a.transpose();
      T_.row(i).segment(n_, n_) = -sign * r.a.transpose();
      T_(i, rhs_col()) = sign * r.b;
      if (r.inequality) {
        T_(i, slack) = sign;
        if (sign > 0.0) basis_[i] = slack;
        ++slack;
      }
      T_(i, first_artificial_ + i) = 1.0;
      if (basis_[i] < 0) basis_[i] = first_artificial_ + i;
    }
  }

  void set_phase_one_costs() {
    T_.row(m_).setZero();
    for (int i = 0; i < m_; ++i) {
      if (is_artificial(basis_[i])) {
        T_.row(m_) -= T_.row(i);
      }
    }
    // Artificial columns carry cost 1; basic ones have zero reduced cost.
    for (int i = 0; i < m_; ++i) {
      const int j = first_artificial_ + i;
      T_(m_, j) += 1.0;
    }
  }

  void set_phase_two_costs() {
    T_.row(m_).setZero();
    T_.row(m_).head(n_) = c_.transpose();
    T_.row(m_).segment(n_, n_) = -c_.transpose();
    for (int i = 0; i < m_; ++i) {
      const int j = basis_[i];
      const double cb = T_(m_, j);
      if (cb != 0.0) T_.row(m_) -= cb * T_.row(i);
    }
  }

  void pivot(int r, int e) {
    T_.row(r) /= T_(r, e);
    for (int i = 0; i <= m_; ++i) {
      if (i == r) continue;
      const double f = T_(i, e);
      if (f != 0.0) T_.row(i) -= f * T_.row(r);
    }
    T_(r, e) = 1.0;
    basis_[r] = e;
    ++pivots_;
  }

  LpStatus iterate(bool allow_artificial) {
    const double dj_tol = opt_.tolerance;
    const double piv_tol = 1e-11;
    bool bland = false;
    int degenerate_run = 0;
    const int limit_cols = allow_artificial ? num_cols_ : first_artificial_;
    while (true) {
      if (pivots_ >= opt_.max_pivots) return LpStatus::IterationLimit;

      int e = -1;
      double best = -dj_tol;
      for (int j = 0; j < limit_cols; ++j) {
        const double d = T_(m_, j);
        if (d < best) {
          e = j;
          if (bland) break;
          best = d;
        }
      }
      if (e < 0) return LpStatus::Optimal;

      int r = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m_; ++i) {
        const double a = T_(i, e);
        if (a <= piv_tol) continue;
        const double ratio = std::max(T_(i, rhs_col()), 0.0) / a;
        if (ratio < best_ratio - 1e-12 ||
            (ratio <= best_ratio + 1e-12 && r >= 0 && basis_[i] < basis_[r])) {
          best_ratio = std::min(ratio, best_ratio);
          r = i;
        }
      }
      if (r < 0) return LpStatus::Unbounded;

      if (best_ratio <= 1e-12) {
        if (++degenerate_run > kDegenerateStall) bland = true;
      } else {
        degenerate_run = 0;
      }
      pivot(r, e);
    }
  }

  void drive_out_artificials() {
    for (int i = 0; i < m_; ++i) {
      if (!is_artificial(basis_[i])) continue;
      int best = -1;
      double mag = 1e-9;
      for (int j = 0; j < first_artificial_; ++j) {
        if (std::abs(T_(i, j)) > mag) {
          mag = std::abs(T_(i, j));
          best = j;
        }
      }
      // No candidate: the row is redundant and its artificial stays basic at 0.
      if (best >= 0) pivot(i, best);
    }
  }

  LpOptions opt_;
  int n_ = 0;
  int m_ = 0;
  int num_cols_ = 0;
  int first_artificial_ = 0;
  int pivots_ = 0;
  double feas_tol_ = 0.0;
  bool trivially_infeasible_ = false;
  Vec c_;
  Tableau T_;
  std::vector<int> basis_;
};

}  // namespace

LpResult solve_lp(const LpProblem& problem, const LpOptions& options) {
  Simplex simplex(problem, options);
  return simplex.run();
}

}  // namespace stackprice
