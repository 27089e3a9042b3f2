#pragma once

#include "stackprice/exploration.hpp"
#include "stackprice/market.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace stackprice {

/// Feasibility: find π whose equilibrium aggregate equals N_tot·Z exactly.
/// Miqp: minimize ‖Σᵢxⁱ − N_tot·Z‖² over prices.
enum class BilevelMode { Feasibility, Miqp };

const char* to_string(BilevelMode mode);

/// Single-level reformulation of the pricing problem. The followers' KKT
/// conditions are stacked as
///
///   P̄₁x + P̄₂ν + P̄₃λ + S̄π = −r̄,   Āx = b̄,
///   0 ≤ λ ≤ βm,   0 ≤ h̄ − Ḡx ≤ β(1 − m),   m ∈ {0,1}^L
///
/// plus Λx = N_tot·Z in feasibility mode.
struct BigMProgram {
  MarketInstance market;
  DesiredDistribution Z;
  BilevelMode mode = BilevelMode::Feasibility;
  double beta = 0.0;

  Mat P1;      ///< (I_N + 1 1ᵀ) ⊗ C
  Mat P2;      ///< Diag(1_M)
  Mat P3;      ///< Diag(Gᵢᵀ)
  Vec r_bar;   ///< col(rᵢ)
  Mat A_bar;   ///< Diag(1ᵀ_M)
  Vec b_bar;   ///< col(Nᵢ)
  Mat G_bar;   ///< Diag(Gᵢ)
  Vec h_bar;   ///< col(hᵢ)
  Mat S_bar;   ///< col(Sᵢ)
  Mat Lambda;  ///< aggregate operator, M × NM
  Vec target;  ///< N_tot·Z
  int L = 0;   ///< Σᵢ m_ineq_i

  /// Optional practical bounds on π; unconstrained when empty.
  std::optional<PriceBox> price_box;

  int num_binaries() const { return L; }
};

BigMProgram build_program(const MarketInstance& m, const DesiredDistribution& Z, double beta,
                          BilevelMode mode = BilevelMode::Feasibility);

/// ∞-norm of the stacked stationarity rows at (x, λ, ν, π).
double stationarity_residual(const BigMProgram& prog, const Vec& x, const Vec& lambda,
                             const Vec& nu, const PriceVector& pi);

enum class BilevelStatus { Feasible, Infeasible, Optimal };

const char* to_string(BilevelStatus status);

struct BetaAttempt {
  double beta = 0.0;
  std::string outcome;  ///< "accepted", "margin", "cut_off" or "infeasible"
};

struct BilevelSolution {
  BilevelStatus status = BilevelStatus::Infeasible;
  PriceVector pi;
  Vec x_star;
  Vec lambda_star;  ///< stacked, length L
  Vec nu_star;
  std::vector<int> pattern;  ///< binaries m
  double objective = 0.0;    ///< 0 in feasibility mode, ‖Λx − N_tot·Z‖² otherwise
  double beta_used = 0.0;
  /// max(λ, slack) / β at the certified solution; < 1 − margin when accepted.
  double margin_ratio = 0.0;
  std::vector<BetaAttempt> beta_trail;
  long nodes = 0;   ///< branch-and-bound nodes processed
  long leaves = 0;  ///< binary patterns evaluated exactly
};

enum class SearchStrategy { Auto, Enumerate, BranchAndBound };

struct ExactOptions {
  SearchStrategy strategy = SearchStrategy::Auto;
  /// Largest L handled by enumeration under Auto.
  int enumerate_up_to = 16;
  /// Worker threads for pattern enumeration. Results do not depend on it.
  int jobs = 1;
  /// Relative strict margin required of λ and slacks against β.
  double margin = 1e-6;
  /// Double β and re-solve when the big-M bounds are found insufficient.
  bool recalibrate = true;
  int max_doublings = 20;
};

/// Starting value 10·max(‖h̄‖∞, N_tot·max_j c_j·(N+1), ‖r̄‖∞).
double initial_beta(const MarketInstance& m);

BilevelSolution solve_feasibility(const BigMProgram& prog, const ExactOptions& opt = {});
BilevelSolution solve_miqp(const BigMProgram& prog, const ExactOptions& opt = {});

struct BetaCalibration {
  double beta = 0.0;
  BilevelSolution solution;
};

/// Starts from `beta0` (initial_beta when unset) and doubles until the solution
/// satisfies the strict margins. Throws SolverFailure after `max_doublings`.
BetaCalibration calibrate_beta(const MarketInstance& m, const DesiredDistribution& Z,
                               BilevelMode mode, const ExactOptions& opt = {},
                               std::optional<double> beta0 = std::nullopt);

/// Exhaustive search over all 2^L patterns with no pruning (test oracle).
/// Returns the best leaf objective, or nullopt when no pattern is feasible.
std::optional<double> enumerate_objective(const BigMProgram& prog, int jobs = 1);

}  // namespace stackprice
