#pragma once

#include "stackprice/types.hpp"

namespace stackprice {

/// Dense linear program over free variables:
///
///   minimize cᵀx  subject to  A_ub x ≤ b_ub,  A_eq x = b_eq.
///
/// Bounds on individual variables are expressed as rows of A_ub. Empty
/// matrices (zero rows) are allowed for either constraint block.
struct LpProblem {
  Vec c;
  Mat A_ub;
  Vec b_ub;
  Mat A_eq;
  Vec b_eq;
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

const char* to_string(LpStatus status);

struct LpOptions {
  double tolerance = 1e-9;
  int max_pivots = 200000;
};

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  Vec x;
  double objective = 0.0;
  int pivots = 0;

  bool optimal() const { return status == LpStatus::Optimal; }
};

/// Two-phase dense tableau simplex with Bland's anti-cycling rule. Free
/// variables are split into positive and negative parts internally.
LpResult solve_lp(const LpProblem& problem, const LpOptions& options = {});

/// Largest violation of the constraints of `problem` at `x` (0 when feasible).
double lp_infeasibility(const LpProblem& problem, const Vec& x);

}  // namespace stackprice
