#pragma once

#include "stackprice/market.hpp"

#include <random>
#include <vector>

namespace stackprice {

/// Constants of the relaxed exploration polytope
///
///   P₂ = {π : γ·1 ≤ G_π π ≤ Γ·1},  G_π = col(Ψ S₁, …, Ψ S_N)
///
/// which contains every price inducing an interior equilibrium.
struct ExplorationBounds {
  double alpha = 0.0;  ///< 1 / tr(P⁻¹)
  Mat Psi;             ///< I − α 1 1ᵀ P⁻¹
  double r_bar_max = 0.0;
  double r_bar_min = 0.0;
  double z_bar = 0.0;
  double z_under = 0.0;
  double gamma = 0.0;
  double Gamma = 0.0;
  Mat G_pi;  ///< (N·M) × M

  int num_stations() const { return static_cast<int>(Psi.rows()); }
};

struct PriceBox {
  Vec lo;
  Vec hi;

  int size() const { return static_cast<int>(lo.size()); }
  bool finite() const { return lo.allFinite() && hi.allFinite(); }
  bool contains(const PriceVector& pi, double tol = 0.0) const;
};

ExplorationBounds compute_bounds(const MarketInstance& m);

inline constexpr double kMembershipTolerance = 1e-9;

/// True iff every entry of G_π π lies in [γ, Γ] (up to `tol`).
bool membership_relaxed(const ExplorationBounds& b, const PriceVector& pi,
                        double tol = kMembershipTolerance);

/// Per-coordinate LP box around P₂. Coordinates whose LP is unbounded get an
/// infinite bound and are listed in `unbounded_coordinates`.
struct BoxSuperset {
  PriceBox box;
  std::vector<PriceVector> vertices;  ///< optimal LP points (2 per bounded coordinate)
  std::vector<int> unbounded_coordinates;

  bool bounded() const { return unbounded_coordinates.empty(); }
  /// Throws Unbounded naming the first unbounded coordinate.
  const PriceBox& require_bounded() const;
};

BoxSuperset box_superset(const ExplorationBounds& b);

/// Independent per-coordinate uniform draw. Throws InvalidInput on an
/// infinite or inverted box.
PriceVector sample_uniform(const PriceBox& box, std::mt19937_64& rng);
PriceVector sample_uniform(const PriceBox& box, std::uint64_t seed);

/// [lo, hi]^M.
PriceBox uniform_box(int num_stations, double lo, double hi);

}  // namespace stackprice
