#pragma once

#include "stackprice/types.hpp"

#include <vector>

namespace stackprice {

/// Charging stations shared by all companies.
struct StationSet {
  Vec tau;  ///< capacities (vehicles)
  Vec c;    ///< queuing cost coefficients, C = diag(c), all strictly positive

  int size() const { return static_cast<int>(c.size()); }
};

/// One ride-hailing company: its charging fleet, per-station demand and
/// revenue terms, and the polytope {x : 1ᵀx = fleet, Gx ≤ h}.
struct Company {
  int fleet = 0;  ///< vehicles that want to charge (N_i)
  Vec demand;     ///< expected kWh per vehicle per station, S_i = diag(demand)
  Vec e_arr;      ///< unoccupied travel cost per station
  Vec e_pro;      ///< expected regional profit per station
  Mat G;
  Vec h;
};

/// Charging price per kWh at every station. Any real value is admissible.
using PriceVector = Vec;

/// Desired share of vehicles per station.
struct DesiredDistribution {
  Vec z;

  /// Throws InvalidInput unless entries are in [0,1] and sum to one.
  void validate() const;
};

/// The π-parametrized quadratic aggregative game. Company i minimizes
///
///   ½ xᵢᵀ P xᵢ + xᵢᵀ Q Σ_{j≠i} xⱼ + rᵢᵀ xᵢ + xᵢᵀ Sᵢ π
///
/// with P = 2C, Q = C and rᵢ = e_arr − e_pro − Cτ. Joint strategies are
/// stacked company-major: x = (x¹, …, x^N), each block of length M.
class MarketInstance {
 public:
  MarketInstance() = default;

  int num_stations() const { return stations_.size(); }
  int num_companies() const { return static_cast<int>(companies_.size()); }
  int joint_size() const { return num_stations() * num_companies(); }

  const StationSet& stations() const { return stations_; }
  const std::vector<Company>& companies() const { return companies_; }
  const Company& company(int i) const { return companies_.at(static_cast<std::size_t>(i)); }

  const Mat& P() const { return P_; }
  const Mat& Q() const { return Q_; }
  const Vec& r(int i) const { return r_.at(static_cast<std::size_t>(i)); }

  Vec fleets() const;
  double total_fleet() const;
  int min_fleet() const;
  int max_fleet() const;

  /// Block i of a joint vector.
  auto block(const Vec& x, int i) const { return x.segment(i * num_stations(), num_stations()); }

  /// Σᵢ xⁱ.
  Vec aggregate(const Vec& x) const;

  /// F₁ = (I_N + 1 1ᵀ) ⊗ C, dense.
  Mat pseudo_gradient_matrix() const;
  /// Closed-form extreme eigenvalues of F₁.
  double f1_max_eigenvalue() const;
  double f1_min_eigenvalue() const;

 private:
  friend MarketInstance assemble_market(StationSet stations, std::vector<Company> companies);

  StationSet stations_;
  std::vector<Company> companies_;
  Mat P_;
  Mat Q_;
  std::vector<Vec> r_;
};

/// Validates the inputs, appends any missing x ≥ 0 rows to every Gᵢ, checks
/// each company polytope is nonempty and derives P, Q, rᵢ.
MarketInstance assemble_market(StationSet stations, std::vector<Company> companies);

/// Returns (G, h) with a row −e_j ≤ 0 added for each coordinate j that is not
/// already bounded below by such a row.
std::pair<Mat, Vec> with_nonnegativity(const Mat& G, const Vec& h, int num_stations);

/// F(x, π): block i is P xⁱ + Q Σ_{j≠i} xʲ + rᵢ + Sᵢ π.
Vec pseudo_gradient(const MarketInstance& m, const Vec& x, const PriceVector& pi);

/// Jⁱ(xⁱ, x⁻ⁱ; π) as the quadratic form.
double company_cost(const MarketInstance& m, int i, const Vec& x, const PriceVector& pi);

/// ½‖Σᵢ xⁱ − N_tot·Z‖².
double leader_objective(const MarketInstance& m, const Vec& x, const DesiredDistribution& Z);

/// 1 − ‖Z − x̂‖₂/√2 with x̂ = Σᵢ xⁱ / Σᵢ Nᵢ, clamped to [0,1].
/// `fleets` supplies N_i; the joint vector length must be N·M.
double reward(const Vec& x, const Vec& fleets, const DesiredDistribution& Z);

/// Reward of an already normalized distribution x̂.
double reward_from_distribution(const Vec& x_hat, const DesiredDistribution& Z);

}  // namespace stackprice
