#pragma once

#include "stackprice/lp.hpp"
#include "stackprice/types.hpp"

#include <vector>

namespace stackprice {

/// Convex quadratic program
///
///   minimize ½ xᵀHx + gᵀx  subject to  A_eq x = b_eq,  A_in x ≤ b_in
///
/// with H symmetric positive semidefinite.
struct QpProblem {
  Mat H;
  Vec g;
  Mat A_eq;
  Vec b_eq;
  Mat A_in;
  Vec b_in;

  int dimension() const { return static_cast<int>(g.size()); }
};

enum class QpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

const char* to_string(QpStatus status);

struct QpOptions {
  /// Constraint activity / feasibility tolerance (relative to row norms).
  double feasibility_tol = 1e-10;
  /// Stationarity tolerance used for step-length and multiplier-sign tests.
  double optimality_tol = 1e-10;
  int max_iterations = 5000;
};

struct QpResult {
  QpStatus status = QpStatus::Infeasible;
  Vec x;
  /// Multipliers with stationarity Hx + g + A_eqᵀ y_eq + A_inᵀ y_in = 0.
  Vec y_eq;
  Vec y_in;  // ≥ 0, zero on inactive rows
  std::vector<int> working_set;  // active inequality rows at the solution
  double objective = 0.0;
  int iterations = 0;

  bool optimal() const { return status == QpStatus::Optimal; }
};

/// Primal active-set method with a null-space step. Zero-curvature
/// directions of the reduced Hessian are followed to the nearest blocking
/// constraint, so singular H is handled. A feasible start is obtained from a
/// phase-1 LP.
QpResult solve_qp(const QpProblem& problem, const QpOptions& options = {});

/// Same method warm-started from a point that must already be feasible.
/// `hint` lists inequality rows to try first when forming the working set.
QpResult solve_qp_from(const QpProblem& problem, const Vec& feasible_start,
                       const QpOptions& options = {},
                       const std::vector<int>& hint = {});

/// ∞-norm of the KKT residual groups of a QP at a candidate primal-dual pair:
/// stationarity, primal infeasibility, complementarity and dual sign.
struct QpKktResidual {
  double stationarity = 0.0;
  double primal = 0.0;
  double complementarity = 0.0;
  double dual_sign = 0.0;

  double max() const;
};

QpKktResidual qp_kkt_residual(const QpProblem& problem, const QpResult& result);

}  // namespace stackprice
