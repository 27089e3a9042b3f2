#include "stackprice/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace stackprice {

namespace {

// Battery level every charging vehicle aims for.
constexpr double kTargetSoc = 0.8;
constexpr int kMaxRedraws = 16;

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t t, int attempt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(t >> 32),
                    static_cast<std::uint32_t>(attempt)};
  return std::mt19937_64(seq);
}

}  // namespace

void ScenarioConfig::validate() const {
  const auto M = static_cast<Eigen::Index>(num_stations);
  const auto N = static_cast<std::size_t>(num_companies);
  require(num_stations >= 1 && num_companies >= 1, "scenario: need at least one station and company");
  require(fleet.size() == N && soc_mean.size() == N && soc_spread.size() == N,
          "scenario: per-company vectors must have one entry per company");
  for (int f : fleet) require(f >= 1, "scenario: fleet sizes must be positive");
  for (double s : soc_spread) require(s >= 0.0, "scenario: soc spread must be nonnegative");
  require(soc_threshold > 0.0 && soc_threshold < 1.0, "scenario: soc threshold must lie in (0,1)");
  require(d_min > 0.0 && d_min <= d_max, "scenario: need 0 < d_min <= d_max");
  require(e_pro_base.size() == M && e_arr_base.size() == M && tau.size() == M && c.size() == M &&
              Z.size() == M,
          "scenario: per-station vectors must have one entry per station");
  require(e_pro_noise >= 0.0 && e_arr_noise >= 0.0, "scenario: noise amplitudes must be nonnegative");
  require(price_lo < price_hi, "scenario: price_lo must be below price_hi");
  if (cap_fraction) {
    require(cap_fraction->size() == M, "scenario: cap_fraction needs one entry per station");
    require((cap_fraction->array() >= 0.0).all() && cap_fraction->sum() >= 1.0,
            "scenario: cap fractions must be nonnegative and sum to at least one");
  }
  desired().validate();
}

PolicyConfig ScenarioConfig::policy_config() const {
  PolicyConfig p;
  p.num_companies = num_companies;
  p.num_stations = num_stations;
  p.price_lo = price_lo;
  p.price_hi = price_hi;
  return p;
}

MarketState market_state(const MarketInstance& m) {
  const int M = m.num_stations();
  const int N = m.num_companies();
  MarketState s(2 * N * M);
  for (int i = 0; i < N; ++i) {
    s.segment(i * M, M) = m.company(i).demand;
    s.segment(N * M + i * M, M) = m.r(i);
  }
  return s;
}

GeneratedState generate_state(const ScenarioConfig& cfg, std::uint64_t t) {
  return generate_state(cfg, t, cfg.seed);
}

GeneratedState generate_state(const ScenarioConfig& cfg, std::uint64_t t, std::uint64_t seed) {
  cfg.validate();
  const int M = cfg.num_stations;
  const int N = cfg.num_companies;
  const double thr = cfg.soc_threshold;

  GeneratedState out;
  std::vector<Vec> demand(static_cast<std::size_t>(N));
  std::mt19937_64 rng;
  for (int attempt = 0;; ++attempt) {
    rng = substream(seed, t, attempt);
    out.charging.assign(static_cast<std::size_t>(N), 0);
    bool empty = false;
    for (int i = 0; i < N; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      const double lo = std::max(0.0, cfg.soc_mean[iu] - cfg.soc_spread[iu]);
      const double hi = std::min(1.0, cfg.soc_mean[iu] + cfg.soc_spread[iu]);
      std::uniform_real_distribution<double> soc_draw(lo, hi);
      std::uniform_int_distribution<int> region(0, M - 1);
      Vec deficit = Vec::Zero(M);
      Vec count = Vec::Zero(M);
      int n = 0;
      for (int v = 0; v < cfg.fleet[iu]; ++v) {
        const double soc = lo < hi ? soc_draw(rng) : lo;
        const int j = region(rng);
        if (soc >= thr) continue;
        ++n;
        deficit(j) += kTargetSoc - soc;
        count(j) += 1.0;
      }
      if (n == 0 && attempt >= kMaxRedraws) {
        n = 1;
        deficit(0) = kTargetSoc - thr;
        count(0) = 1.0;
      }
      out.charging[iu] = n;
      if (n == 0) {
        empty = true;
        continue;
      }
      // Regions without charging vehicles take the company mean.
      const double mean = deficit.sum() / count.sum();
      Vec d(M);
      for (int j = 0; j < M; ++j) {
        const double def = count(j) > 0 ? deficit(j) / count(j) : mean;
        // Deficits of charging vehicles lie in (0.8 − thr, 0.8].
        const double u = std::clamp((def - (kTargetSoc - thr)) / thr, 0.0, 1.0);
        d(j) = cfg.d_min + (cfg.d_max - cfg.d_min) * u;
      }
      demand[iu] = d;
    }
    if (!empty) break;
    ++out.redraws;
  }

  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  StationSet stations{cfg.tau, cfg.c};
  std::vector<Company> companies;
  for (int i = 0; i < N; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    Company co;
    co.fleet = out.charging[iu];
    co.demand = demand[iu];
    co.e_pro.resize(M);
    co.e_arr.resize(M);
    for (int j = 0; j < M; ++j) co.e_pro(j) = cfg.e_pro_base(j) * (1.0 + cfg.e_pro_noise * unit(rng));
    for (int j = 0; j < M; ++j) co.e_arr(j) = cfg.e_arr_base(j) * (1.0 + cfg.e_arr_noise * unit(rng));
    if (cfg.cap_fraction) {
      co.G = Mat::Identity(M, M);
      co.h = *cfg.cap_fraction * static_cast<double>(co.fleet);
    } else {
      co.G.resize(0, M);
      co.h.resize(0);
    }
    companies.push_back(std::move(co));
  }
  out.market = assemble_market(std::move(stations), std::move(companies));
  out.s = market_state(out.market);
  return out;
}

std::vector<NamedScenario> canonical_fixtures() {
  std::vector<NamedScenario> out;

  ScenarioConfig sz;
  sz.name = "shenzhen-like";
  sz.num_stations = 4;
  sz.num_companies = 3;
  sz.fleet = {450, 400, 350};
  sz.soc_threshold = 0.55;
  sz.soc_mean = {0.5, 0.55, 0.6};
  sz.soc_spread = {0.3, 0.3, 0.3};
  sz.e_pro_base = (Vec(4) << 60.0, 45.0, 55.0, 40.0).finished();
  sz.e_pro_noise = 0.05;
  sz.e_arr_base = (Vec(4) << 8.0, 12.0, 10.0, 14.0).finished();
  sz.e_arr_noise = 0.05;
  sz.d_min = 10.0;
  sz.d_max = 30.0;
  sz.tau = (Vec(4) << 15.0, 60.0, 35.0, 50.0).finished();
  sz.c = (Vec(4) << 0.3, 0.1, 0.15, 0.12).finished();
  sz.Z = (Vec(4) << 0.37, 0.19, 0.27, 0.17).finished();
  sz.price_lo = 0.0;
  sz.price_hi = 5.0;
  sz.seed = 2024;
  out.push_back({sz.name, sz});

  ScenarioConfig desk;
  desk.name = "desk";
  desk.num_stations = 2;
  desk.num_companies = 2;
  desk.fleet = {40, 40};
  desk.soc_threshold = 0.55;
  desk.soc_mean = {0.3, 0.3};
  desk.soc_spread = {0.3, 0.3};
  desk.e_pro_base = Vec::Constant(2, 30.0);
  desk.e_pro_noise = 0.05;
  desk.e_arr_base = Vec::Constant(2, 5.0);
  desk.e_arr_noise = 0.05;
  desk.d_min = 3.0;
  desk.d_max = 5.0;
  desk.tau = Vec::Constant(2, 20.0);
  desk.c = Vec::Ones(2);
  desk.Z = (Vec(2) << 0.52, 0.48).finished();
  desk.price_lo = 0.0;
  desk.price_hi = 5.0;
  desk.seed = 7;
  out.push_back({desk.name, desk});
  return out;
}

ScenarioConfig fixture(const std::string& name) {
  for (const NamedScenario& f : canonical_fixtures()) {
    if (f.name == name) return f.config;
  }
  throw InvalidInput("unknown fixture '" + name + "' (expected shenzhen-like or desk)");
}

}  // namespace stackprice
