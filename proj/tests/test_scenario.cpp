#include "stackprice/scenario.hpp"

#include "stackprice/equilibrium.hpp"

#include <gtest/gtest.h>

using namespace stackprice;

TEST(Scenario, FixturesCarryReferenceValues) {
  const ScenarioConfig sz = fixture("shenzhen-like");
  EXPECT_EQ(sz.num_stations, 4);
  EXPECT_EQ(sz.num_companies, 3);
  EXPECT_EQ(sz.Z, (Vec(4) << 0.37, 0.19, 0.27, 0.17).finished());
  EXPECT_EQ(sz.tau, (Vec(4) << 15, 60, 35, 50).finished());
  EXPECT_EQ(sz.price_lo, 0.0);
  EXPECT_EQ(sz.price_hi, 5.0);
  for (const NamedScenario& f : canonical_fixtures()) {
    EXPECT_NEAR(f.config.Z.sum(), 1.0, 1e-12) << f.name;
    EXPECT_NO_THROW(f.config.validate());
  }
  EXPECT_THROW(fixture("nowhere"), InvalidInput);
}

TEST(Scenario, StateLayout) {
  const GeneratedState g = generate_state(fixture("shenzhen-like"), 1);
  ASSERT_EQ(g.s.size(), 24);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(g.s.segment(4 * i, 4), g.market.company(i).demand);
    EXPECT_EQ(g.s.segment(12 + 4 * i, 4), g.market.r(i));
  }
  EXPECT_EQ(market_state(g.market), g.s);
}

TEST(Scenario, DemandStaysInConfiguredRange) {
  const ScenarioConfig sc = fixture("shenzhen-like");
  for (std::uint64_t t = 0; t < 50; ++t) {
    const GeneratedState g = generate_state(sc, t);
    for (int i = 0; i < 3; ++i) {
      EXPECT_GE(g.market.company(i).demand.minCoeff(), sc.d_min);
      EXPECT_LE(g.market.company(i).demand.maxCoeff(), sc.d_max);
      EXPECT_GE(g.charging[static_cast<std::size_t>(i)], 1);
      EXPECT_LE(g.charging[static_cast<std::size_t>(i)], sc.fleet[static_cast<std::size_t>(i)]);
      EXPECT_EQ(g.market.company(i).fleet, g.charging[static_cast<std::size_t>(i)]);
      const Vec rel = g.market.company(i).e_pro.cwiseQuotient(sc.e_pro_base);
      EXPECT_GE(rel.minCoeff(), 1.0 - sc.e_pro_noise);
      EXPECT_LE(rel.maxCoeff(), 1.0 + sc.e_pro_noise);
    }
  }
}

TEST(Scenario, DegenerateChargeDistributionChargesWholeFleet) {
  ScenarioConfig sc = fixture("desk");
  sc.soc_spread = {0.0, 0.0};
  const GeneratedState g = generate_state(sc, 3);
  EXPECT_EQ(g.charging, (std::vector<int>{40, 40}));
  EXPECT_EQ(g.redraws, 0);
}

TEST(Scenario, NoiselessConfigurationGivesConstantStates) {
  ScenarioConfig sc = fixture("desk");
  sc.soc_spread = {0.0, 0.0};
  sc.e_pro_noise = 0.0;
  sc.e_arr_noise = 0.0;
  const Vec s0 = generate_state(sc, 0).s;
  for (std::uint64_t t = 1; t < 20; ++t) EXPECT_EQ(generate_state(sc, t).s, s0);
}

TEST(Scenario, SameSeedSameSequence) {
  const ScenarioConfig sc = fixture("shenzhen-like");
  for (std::uint64_t t = 0; t < 10; ++t) {
    EXPECT_EQ(generate_state(sc, t, 99).s, generate_state(sc, t, 99).s);
  }
  EXPECT_NE(generate_state(sc, 1, 99).s, generate_state(sc, 1, 100).s);
  EXPECT_NE(generate_state(sc, 1, 99).s, generate_state(sc, 2, 99).s);
}

TEST(Scenario, EmptyCompaniesAreRedrawnThenFilled) {
  ScenarioConfig sc = fixture("desk");
  sc.fleet = {1, 1};
  // One vehicle per company with a half chance of charging.
  sc.soc_mean = {0.55, 0.55};
  sc.soc_spread = {0.2, 0.2};
  int redrawn = 0;
  for (std::uint64_t t = 0; t < 40; ++t) {
    const GeneratedState g = generate_state(sc, t);
    EXPECT_EQ(g.charging, (std::vector<int>{1, 1}));
    if (g.redraws > 0) ++redrawn;
  }
  EXPECT_GT(redrawn, 0);

  // Nobody ever charges: escalation gives each company one vehicle.
  sc.soc_mean = {0.9, 0.9};
  sc.soc_spread = {0.05, 0.05};
  const GeneratedState g = generate_state(sc, 0);
  EXPECT_EQ(g.redraws, 16);
  EXPECT_EQ(g.charging, (std::vector<int>{1, 1}));
}

TEST(Scenario, CapsScaleWithChargingCount) {
  ScenarioConfig sc = fixture("desk");
  sc.cap_fraction = (Vec(2) << 0.7, 0.7).finished();
  const GeneratedState g = generate_state(sc, 4);
  for (int i = 0; i < 2; ++i) {
    const Company& co = g.market.company(i);
    EXPECT_EQ(co.G.rows(), 4);  // caps plus nonnegativity
    EXPECT_NEAR(co.h(0), 0.7 * co.fleet, 1e-12);
  }
  EXPECT_NO_THROW(solve_vne(g.market, Vec::Constant(2, 2.0)));
}

TEST(Scenario, DeskFixtureAdmitsEqualSplit) {
  ScenarioConfig sc = fixture("desk");
  sc.soc_spread = {0.0, 0.0};
  sc.e_pro_noise = 0.0;
  sc.e_arr_noise = 0.0;
  const GeneratedState g = generate_state(sc, 0);
  const EquilibriumResult r = solve_vne(g.market, Vec::Constant(2, 1.0));
  EXPECT_LE((g.market.aggregate(r.x_star) / g.market.total_fleet() - Vec::Constant(2, 0.5))
                .lpNorm<Eigen::Infinity>(),
            1e-8);
}

TEST(Scenario, ValidationCatchesBadShapes) {
  ScenarioConfig sc = fixture("desk");
  sc.fleet = {40};
  EXPECT_THROW(sc.validate(), InvalidInput);
  sc = fixture("desk");
  sc.Z = (Vec(2) << 0.7, 0.7).finished();
  EXPECT_THROW(sc.validate(), InvalidInput);
  sc = fixture("desk");
  sc.d_min = 6.0;
  EXPECT_THROW(sc.validate(), InvalidInput);
}
