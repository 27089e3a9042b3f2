#include "stackprice/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace stackprice {

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::Unbounded: return "unbounded";
    case QpStatus::IterationLimit: return "iteration_limit";
  }
  return "unknown";
}

double QpKktResidual::max() const {
  return std::max({stationarity, primal, complementarity, dual_sign});
}

QpKktResidual qp_kkt_residual(const QpProblem& p, const QpResult& r) {
  QpKktResidual out;
  Vec grad = p.H * r.x + p.g;
  if (p.A_eq.rows() > 0) grad += p.A_eq.transpose() * r.y_eq;
  if (p.A_in.rows() > 0) grad += p.A_in.transpose() * r.y_in;
  out.stationarity = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
  if (p.A_eq.rows() > 0) {
    out.primal = (p.A_eq * r.x - p.b_eq).cwiseAbs().maxCoeff();
  }
  if (p.A_in.rows() > 0) {
    const Vec slack = p.A_in * r.x - p.b_in;
    out.primal = std::max(out.primal, std::max(slack.maxCoeff(), 0.0));
    out.complementarity = r.y_in.cwiseProduct(slack).cwiseAbs().maxCoeff();
    out.dual_sign = std::max(0.0, -r.y_in.minCoeff());
  }
  return out;
}

namespace {

Mat stack_rows(const QpProblem& p, const std::vector<int>& working) {
  const int n = p.dimension();
  Mat A(p.A_eq.rows() + static_cast<Eigen::Index>(working.size()), n);
  if (p.A_eq.rows() > 0) A.topRows(p.A_eq.rows()) = p.A_eq;
  for (std::size_t k = 0; k < working.size(); ++k) {
    A.row(p.A_eq.rows() + static_cast<Eigen::Index>(k)) = p.A_in.row(working[k]);
  }
  return A;
}

Eigen::Index rank_of(const Mat& A) {
  if (A.rows() == 0) return 0;
  Eigen::ColPivHouseholderQR<Mat> qr(A.transpose());
  qr.setThreshold(1e-10);
  return qr.rank();
}

}  // namespace

QpResult solve_qp_from(const QpProblem& p, const Vec& x0, const QpOptions& opt,
                       const std::vector<int>& hint) {
  const int n = p.dimension();
  require(p.H.rows() == n && p.H.cols() == n, "solve_qp: H must be n×n");
  require(p.A_eq.rows() == 0 || p.A_eq.cols() == n, "solve_qp: A_eq column mismatch");
  require(p.A_in.rows() == 0 || p.A_in.cols() == n, "solve_qp: A_in column mismatch");
  require(p.b_eq.size() == p.A_eq.rows() && p.b_in.size() == p.A_in.rows(),
          "solve_qp: right-hand side length mismatch");
  require(x0.size() == n, "solve_qp: start point length mismatch");

  const int m_in = static_cast<int>(p.A_in.rows());
  Vec row_norm(m_in);
  for (int j = 0; j < m_in; ++j) row_norm(j) = std::max(p.A_in.row(j).norm(), 1e-300);

  QpResult res;
  Vec x = x0;
  std::vector<int> working;
  std::vector<char> in_working(m_in, 0);

  auto active_tol = [&](int j) {
    return opt.feasibility_tol * row_norm(j) * (1.0 + x.cwiseAbs().maxCoeff());
  };

  // Initial working set: active rows whose normals are independent of the
  // rows already selected.
  {
    Eigen::Index rank = rank_of(p.A_eq);
    auto try_add = [&](int j) {
      if (j < 0 || j >= m_in || in_working[j]) return;
      const double slack = p.b_in(j) - p.A_in.row(j).dot(x);
      if (std::abs(slack) > active_tol(j) * 10.0) return;
      working.push_back(j);
      const Eigen::Index r = rank_of(stack_rows(p, working));
      if (r > rank) {
        rank = r;
        in_working[j] = 1;
      } else {
        working.pop_back();
      }
    };
    for (int j : hint) try_add(j);
    for (int j = 0; j < m_in; ++j) try_add(j);
  }

  const Vec y_empty;
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    res.iterations = iter + 1;
    const Vec q = p.H * x + p.g;
    const Mat A = stack_rows(p, working);

    Vec step = Vec::Zero(n);
    bool ray = false;
    Eigen::Index rank = 0;
    Mat Z;
    if (A.rows() > 0) {
      Eigen::ColPivHouseholderQR<Mat> qr(A.transpose());
      qr.setThreshold(1e-10);
      rank = qr.rank();
      const Mat Q = qr.householderQ();
      Z = Q.rightCols(n - rank);
    } else {
      Z = Mat::Identity(n, n);
    }

    if (Z.cols() > 0) {
      const Mat Hr = Z.transpose() * p.H * Z;
      const Vec gr = Z.transpose() * q;
      Eigen::SelfAdjointEigenSolver<Mat> eig(Hr);
      const Vec& ev = eig.eigenvalues();
      const Mat& U = eig.eigenvectors();
      const double ev_tol = 1e-11 * std::max(1.0, ev.cwiseAbs().maxCoeff());
      const Vec coef = U.transpose() * gr;
      Vec flat = Vec::Zero(coef.size());
      Vec curved = Vec::Zero(coef.size());
      for (Eigen::Index k = 0; k < coef.size(); ++k) {
        if (ev(k) > ev_tol) {
          curved(k) = -coef(k) / ev(k);
        } else {
          flat(k) = -coef(k);
        }
      }
      const double gscale = 1.0 + q.cwiseAbs().maxCoeff();
      if (flat.cwiseAbs().maxCoeff() > opt.optimality_tol * gscale) {
        ray = true;
        step = Z * (U * flat);
      } else {
        step = Z * (U * curved);
      }
    }

    const double step_tol = 1e-13 * (1.0 + x.cwiseAbs().maxCoeff());
    if (step.cwiseAbs().maxCoeff() <= step_tol) {
      // Stationary on the working set: check multiplier signs.
      Vec y = Vec::Zero(A.rows());
      if (A.rows() > 0) {
        Eigen::CompleteOrthogonalDecomposition<Mat> cod(A.transpose());
        y = cod.solve(-q);
      }
      const Eigen::Index m_eq = p.A_eq.rows();
      int drop = -1;
      double most_negative = -opt.optimality_tol * (1.0 + q.cwiseAbs().maxCoeff());
      for (std::size_t k = 0; k < working.size(); ++k) {
        const double yk = y(m_eq + static_cast<Eigen::Index>(k));
        if (yk < most_negative) {
          most_negative = yk;
          drop = static_cast<int>(k);
        }
      }
      if (drop >= 0) {
        in_working[working[drop]] = 0;
        working.erase(working.begin() + drop);
        continue;
      }
      res.status = QpStatus::Optimal;
      res.x = x;
      res.y_eq = m_eq > 0 ? Vec(y.head(m_eq)) : Vec();
      res.y_in = Vec::Zero(m_in);
      for (std::size_t k = 0; k < working.size(); ++k) {
        res.y_in(working[k]) = std::max(0.0, y(m_eq + static_cast<Eigen::Index>(k)));
      }
      res.working_set = working;
      std::sort(res.working_set.begin(), res.working_set.end());
      res.objective = 0.5 * x.dot(p.H * x) + p.g.dot(x);
      return res;
    }

    double alpha = ray ? std::numeric_limits<double>::infinity() : 1.0;
    int blocking = -1;
    const double step_norm = step.norm();
    for (int j = 0; j < m_in; ++j) {
      if (in_working[j]) continue;
      const double ap = p.A_in.row(j).dot(step);
      if (ap <= 1e-14 * row_norm(j) * step_norm) continue;
      const double slack = std::max(0.0, p.b_in(j) - p.A_in.row(j).dot(x));
      const double t = slack / ap;
      if (t < alpha) {
        alpha = t;
        blocking = j;
      }
    }
    if (!std::isfinite(alpha)) {
      res.status = QpStatus::Unbounded;
      res.x = x;
      return res;
    }
    x += alpha * step;
    if (blocking >= 0) {
      working.push_back(blocking);
      in_working[blocking] = 1;
    }
  }
  res.status = QpStatus::IterationLimit;
  res.x = x;
  return res;
}

QpResult solve_qp(const QpProblem& p, const QpOptions& opt) {
  LpProblem lp;
  lp.c = Vec::Zero(p.dimension());
  lp.A_ub = p.A_in;
  lp.b_ub = p.b_in;
  lp.A_eq = p.A_eq;
  lp.b_eq = p.b_eq;
  const LpResult start = solve_lp(lp);
  if (start.status == LpStatus::Infeasible) {
    QpResult r;
    r.status = QpStatus::Infeasible;
    return r;
  }
  if (!start.optimal()) {
    QpResult r;
    r.status = QpStatus::IterationLimit;
    return r;
  }
  return solve_qp_from(p, start.x, opt);
}

}  // namespace stackprice
