#pragma once

#include "stackprice/equilibrium.hpp"
#include "stackprice/market.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace stackprice::testing {

struct RandomMarketOptions {
  double demand_lo = 5.0;
  double demand_hi = 30.0;
  int fleet_lo = 5;
  int fleet_hi = 20;
  // Per-station cap as a fraction of each company's fleet; 0 disables caps.
  double cap_fraction = 0.0;
};

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vec uniform_vec(std::mt19937_64& rng, int n, double lo, double hi) {
  Vec v(n);
  for (int k = 0; k < n; ++k) v(k) = uniform(rng, lo, hi);
  return v;
}

inline MarketInstance random_market(std::mt19937_64& rng, int M, int N,
                                    const RandomMarketOptions& opt = {}) {
  StationSet st{uniform_vec(rng, M, 0.0, 20.0), uniform_vec(rng, M, 0.5, 2.0)};
  std::vector<Company> cos;
  for (int i = 0; i < N; ++i) {
    Company co;
    co.fleet = std::uniform_int_distribution<int>(opt.fleet_lo, opt.fleet_hi)(rng);
    co.demand = uniform_vec(rng, M, opt.demand_lo, opt.demand_hi);
    co.e_arr = uniform_vec(rng, M, 2.0, 15.0);
    co.e_pro = uniform_vec(rng, M, 20.0, 60.0);
    if (opt.cap_fraction > 0.0) {
      co.G = Mat::Identity(M, M);
      co.h = Vec::Constant(M, opt.cap_fraction * co.fleet);
    } else {
      co.G.resize(0, M);
      co.h.resize(0);
    }
    cos.push_back(std::move(co));
  }
  return assemble_market(std::move(st), std::move(cos));
}

// Market with C = diag(c), zero travel terms and r_i = −Cτ.
inline MarketInstance plain_market(const Vec& c, const Vec& tau, const std::vector<int>& fleets,
                                   const Vec& demand) {
  const auto M = static_cast<int>(c.size());
  std::vector<Company> cos;
  for (int f : fleets) {
    Company co;
    co.fleet = f;
    co.demand = demand;
    co.e_arr = Vec::Zero(M);
    co.e_pro = Vec::Zero(M);
    co.G.resize(0, M);
    co.h.resize(0);
    cos.push_back(std::move(co));
  }
  return assemble_market(StationSet{tau, c}, std::move(cos));
}

// Random market and price whose equilibrium is strictly interior.
struct InteriorCase {
  MarketInstance market;
  PriceVector pi;
  InteriorSolution kkt;
};

inline InteriorCase random_interior_case(std::mt19937_64& rng, int M, int N,
                                         double price_span = 2.0) {
  for (;;) {
    RandomMarketOptions opt;
    opt.demand_lo = 0.5;
    opt.demand_hi = 2.0;
    opt.fleet_lo = 20;
    opt.fleet_hi = 60;
    MarketInstance m = random_market(rng, M, N, opt);
    PriceVector pi = uniform_vec(rng, M, -price_span, price_span);
    InteriorSolution s = solve_interior_kkt(m, pi);
    if (s.interior) return {std::move(m), std::move(pi), std::move(s)};
  }
}

inline double relative_gap(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace stackprice::testing
