#pragma once

#include "stackprice/market.hpp"
#include "stackprice/policy.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace stackprice {

/// Parametric stand-in for a fleet simulator. Every iteration each vehicle
/// draws a state of charge; vehicles below the threshold want to charge and are
/// spread uniformly over the station regions. Per-vehicle demand at a station
/// follows the mean energy deficit of the charging vehicles in that region.
struct ScenarioConfig {
  std::string name = "custom";
  int num_stations = 0;
  int num_companies = 0;
  std::vector<int> fleet;
  double soc_threshold = 0.55;
  std::vector<double> soc_mean;    ///< per company
  std::vector<double> soc_spread;  ///< per company, uniform half-width
  Vec e_pro_base;
  double e_pro_noise = 0.0;  ///< relative amplitude of a uniform multiplicative draw
  Vec e_arr_base;
  double e_arr_noise = 0.0;
  double d_min = 1.0;
  double d_max = 1.0;
  Vec tau;
  Vec c;
  Vec Z;
  /// Optional per-station cap as a fraction of the company's charging count.
  std::optional<Vec> cap_fraction;
  /// Price box used by the policy head and box exploration.
  double price_lo = 0.0;
  double price_hi = 5.0;
  std::uint64_t seed = 0;

  void validate() const;
  DesiredDistribution desired() const { return {Z}; }
  PolicyConfig policy_config() const;
};

struct GeneratedState {
  MarketState s;
  MarketInstance market;
  std::vector<int> charging;  ///< N_i(t)
  int redraws = 0;            ///< draws discarded because a company had no charging vehicle
};

/// State of iteration t. Pure in (cfg, t, seed). A draw in which some company
/// has no charging vehicle is redrawn from the next sub-stream; after 16 redraws
/// each such company is given a single vehicle at the threshold.
GeneratedState generate_state(const ScenarioConfig& cfg, std::uint64_t t, std::uint64_t seed);
GeneratedState generate_state(const ScenarioConfig& cfg, std::uint64_t t);

/// s = (d¹, …, d^N, r₁, …, r_N) of an assembled market.
MarketState market_state(const MarketInstance& m);

struct NamedScenario {
  std::string name;
  ScenarioConfig config;
};

/// "shenzhen-like" (4 stations, 3 companies) and "desk" (2 stations, 2 companies).
std::vector<NamedScenario> canonical_fixtures();
ScenarioConfig fixture(const std::string& name);

}  // namespace stackprice
