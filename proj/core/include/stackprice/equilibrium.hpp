#pragma once

#include "stackprice/market.hpp"
#include "stackprice/qp.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace stackprice {

/// Euclidean projection onto one company's polytope {x : 1ᵀx = N, Gx ≤ h}.
///
/// Construction finds a feasible point with a phase-1 LP (throws Infeasible
/// when there is none). Each projection is an exact active-set QP solve,
/// warm-started from the previous result so that repeated calls inside an
/// iterative scheme stay cheap. Not thread-safe; use one per thread.
class PolytopeProjector {
 public:
  explicit PolytopeProjector(const Company& company);

  Vec project(const Vec& y);

  /// KKT residual of the last projection QP.
  double last_residual() const { return last_residual_; }

  int dimension() const { return static_cast<int>(problem_.g.size()); }

 private:
  QpProblem problem_;
  Vec warm_;
  std::vector<int> warm_active_;
  double last_residual_ = 0.0;
};

/// One-shot projection of y onto the polytope of `company`.
Vec project_onto_polytope(const Company& company, const Vec& y);

enum class VeScheme { ProjectedGradient, Extragradient };

struct SolverConfig {
  /// Step size; 0 selects 1/λ_max(F₁) = 1/((N+1)·max_j c_j), halved for extragradient.
  double step = 0.0;
  double tol = 1e-8;
  int max_iter = 200000;
  VeScheme scheme = VeScheme::ProjectedGradient;
  /// Re-solve the KKT system on the detected active set after convergence.
  bool polish = true;
  /// Optional starting point (joint vector). Projected before use.
  std::optional<Vec> start;
  /// Called after every iteration with (iteration, x_k, x_{k+1}).
  std::function<void(int, const Vec&, const Vec&)> on_iteration;
};

/// Margin below which a constraint counts as active.
inline constexpr double kActivityMargin = 1e-7;

struct EquilibriumResult {
  Vec x_star;
  std::vector<Vec> lambda_star;  ///< per company, one entry per row of Gᵢ
  Vec nu_star;                   ///< per company multiplier of 1ᵀxⁱ = Nᵢ
  double residual = 0.0;         ///< ‖x − Π(x − ηF(x))‖_∞
  int iterations = 0;
  bool interior = false;         ///< Gᵢxⁱ < hᵢ − margin for every company
  bool polished = false;
};

/// Thrown when the iteration budget is exhausted. Carries the best iterate.
class EquilibriumNotConverged : public SolverFailure {
 public:
  EquilibriumNotConverged(const std::string& what, Vec best, double residual)
      : SolverFailure(what), best_(std::move(best)), residual_(residual) {}
  const Vec& best_iterate() const { return best_; }
  double residual() const { return residual_; }

 private:
  Vec best_;
  double residual_;
};

/// Unique variational Nash equilibrium of the market at prices π.
EquilibriumResult solve_vne(const MarketInstance& m, const PriceVector& pi,
                            const SolverConfig& cfg = {});

/// Linear-KKT equilibrium assuming no inequality is active.
struct InteriorSolution {
  Vec x;
  Vec nu;
  bool interior = false;
};

/// Solves the stacked system F₁x + F₂ + col(νᵢ1) = 0, 1ᵀxⁱ = Nᵢ by dense LU
/// and reports whether the result satisfies every Gᵢxⁱ ≤ hᵢ − 1e-9.
InteriorSolution solve_interior_kkt(const MarketInstance& m, const PriceVector& pi);

/// Least-squares dual recovery on the active set of each company.
void recover_duals(const MarketInstance& m, const PriceVector& pi, EquilibriumResult& result);

struct CompanyKkt {
  double stationarity = 0.0;
  double complementarity = 0.0;  ///< includes dual sign and primal slack sign
  double primal = 0.0;
};

struct KktReport {
  std::vector<CompanyKkt> companies;
  double max_residual = 0.0;
  bool pass = false;
};

inline constexpr double kKktTolerance = 1e-6;

KktReport verify_kkt(const MarketInstance& m, const EquilibriumResult& result,
                     const PriceVector& pi, double tolerance = kKktTolerance);

/// ‖x − Π_X(x − ηF(x, π))‖_∞.
double natural_map_residual(const MarketInstance& m, const Vec& x, const PriceVector& pi,
                            double step);

}  // namespace stackprice
