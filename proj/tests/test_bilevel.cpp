#include "stackprice/bilevel.hpp"

#include "stackprice/equilibrium.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace stackprice;
using stackprice::testing::plain_market;
using stackprice::testing::random_market;
using stackprice::testing::relative_gap;
using stackprice::testing::uniform_vec;

namespace {

MarketInstance tilted_market(std::optional<double> cap = std::nullopt) {
  Company co;
  co.fleet = 10;
  co.demand = Vec::Ones(2);
  co.e_arr = (Vec(2) << 0, 1).finished();
  co.e_pro = Vec::Zero(2);
  if (cap) {
    co.G = (Mat(1, 2) << 1, 0).finished();
    co.h = Vec::Constant(1, *cap);
  } else {
    co.G.resize(0, 2);
    co.h.resize(0);
  }
  return assemble_market(StationSet{Vec::Zero(2), Vec::Ones(2)}, {co});
}

Vec stacked_lambda(const EquilibriumResult& r) {
  Eigen::Index n = 0;
  for (const Vec& l : r.lambda_star) n += l.size();
  Vec out(n);
  Eigen::Index at = 0;
  for (const Vec& l : r.lambda_star) {
    out.segment(at, l.size()) = l;
    at += l.size();
  }
  return out;
}

// Replays π through the equilibrium solver and returns the reward.
double replay_reward(const MarketInstance& m, const PriceVector& pi, const DesiredDistribution& Z) {
  const EquilibriumResult r = solve_vne(m, pi);
  return reward(r.x_star, m.fleets(), Z);
}

void expect_certified(const BilevelSolution& s, double margin = 1e-6) {
  const double cap = s.beta_used * (1.0 - margin);
  EXPECT_LE(s.lambda_star.maxCoeff(), cap);
  EXPECT_LT(s.margin_ratio, 1.0 - margin);
  ASSERT_FALSE(s.beta_trail.empty());
  EXPECT_EQ(s.beta_trail.back().outcome, "accepted");
}

}  // namespace

TEST(Bilevel, ProgramBlocksForSingleCompany) {
  const MarketInstance m = plain_market(Vec::Ones(2), Vec::Zero(2), {10}, Vec::Ones(2));
  const BigMProgram p = build_program(m, {(Vec(2) << 0.5, 0.5).finished()}, 100.0);
  EXPECT_EQ(p.L, 2);
  EXPECT_TRUE(p.P1.isApprox(2.0 * Mat::Identity(2, 2)));
  EXPECT_EQ(p.target, Vec::Constant(2, 5.0));
}

TEST(Bilevel, BinaryCountForThreeCappedCompanies) {
  std::mt19937_64 rng(51);
  stackprice::testing::RandomMarketOptions opt;
  opt.cap_fraction = 0.6;
  const MarketInstance m = random_market(rng, 2, 3, opt);
  const BigMProgram p = build_program(m, {(Vec(2) << 0.5, 0.5).finished()}, 100.0);
  EXPECT_EQ(p.num_binaries(), 12);
}

TEST(Bilevel, StationarityRowsVanishAtEquilibrium) {
  std::mt19937_64 rng(52);
  for (int k = 0; k < 20; ++k) {
    stackprice::testing::RandomMarketOptions opt;
    opt.cap_fraction = 0.5;
    const MarketInstance m = random_market(rng, 3, 1 + k % 3, opt);
    const Vec pi = uniform_vec(rng, 3, -4, 4);
    const EquilibriumResult r = solve_vne(m, pi);
    const BigMProgram p = build_program(m, {Vec::Constant(3, 1.0 / 3)}, 1e3);
    EXPECT_LE(stationarity_residual(p, r.x_star, stacked_lambda(r), r.nu_star, pi), 1e-6);
  }
}

TEST(Bilevel, ReachableTargetIsFeasibleAndReplays) {
  const MarketInstance m = tilted_market();
  const DesiredDistribution Z{(Vec(2) << 0.525, 0.475).finished()};
  const BilevelSolution s = solve_feasibility(build_program(m, Z, initial_beta(m)));
  ASSERT_EQ(s.status, BilevelStatus::Feasible);
  EXPECT_LE((m.aggregate(s.x_star) - 10.0 * Z.z).lpNorm<Eigen::Infinity>(), 1e-6);
  EXPECT_NEAR(replay_reward(m, s.pi, Z), 1.0, 1e-6);
  expect_certified(s);
}

TEST(Bilevel, CapBelowTargetIsInfeasible) {
  const MarketInstance m = tilted_market(3.0);
  const BilevelSolution s = solve_feasibility(build_program(m, {(Vec(2) << 1, 0).finished()}, 1e3));
  EXPECT_EQ(s.status, BilevelStatus::Infeasible);
  for (auto strategy : {SearchStrategy::Enumerate, SearchStrategy::BranchAndBound}) {
    ExactOptions opt;
    opt.strategy = strategy;
    EXPECT_EQ(solve_feasibility(build_program(m, {(Vec(2) << 1, 0).finished()}, 1e3), opt).status,
              BilevelStatus::Infeasible);
  }
}

TEST(Bilevel, SymmetricMarketNeedsEqualPrices) {
  const MarketInstance m = plain_market(Vec::Ones(2), Vec::Zero(2), {10, 10}, Vec::Ones(2));
  const DesiredDistribution Z{(Vec(2) << 0.5, 0.5).finished()};
  const BilevelSolution s = solve_feasibility(build_program(m, Z, initial_beta(m)));
  ASSERT_EQ(s.status, BilevelStatus::Feasible);
  EXPECT_NEAR(s.pi(0), s.pi(1), 1e-6);
  EXPECT_NEAR(replay_reward(m, s.pi, Z), 1.0, 1e-6);
}

TEST(Bilevel, MiqpIsZeroWhenFeasible) {
  const MarketInstance m = tilted_market();
  const DesiredDistribution Z{(Vec(2) << 0.6, 0.4).finished()};
  const BilevelSolution s = solve_miqp(build_program(m, Z, initial_beta(m), BilevelMode::Miqp));
  ASSERT_EQ(s.status, BilevelStatus::Optimal);
  EXPECT_LE(s.objective, 1e-9);
  EXPECT_NEAR(replay_reward(m, s.pi, Z), 1.0, 1e-6);
}

TEST(Bilevel, MiqpWithUnreachableTargetMatchesEnumeration) {
  const MarketInstance m = tilted_market(3.0);
  const DesiredDistribution Z{(Vec(2) << 0.9, 0.1).finished()};
  for (auto strategy : {SearchStrategy::Enumerate, SearchStrategy::BranchAndBound}) {
    ExactOptions opt;
    opt.strategy = strategy;
    const BilevelSolution s = solve_miqp(build_program(m, Z, initial_beta(m), BilevelMode::Miqp), opt);
    ASSERT_EQ(s.status, BilevelStatus::Optimal);
    // Best reachable aggregate is (3, 7) against a target of (9, 1).
    EXPECT_NEAR(s.objective, 72.0, 1e-8);
    const auto oracle = enumerate_objective(build_program(m, Z, s.beta_used, BilevelMode::Miqp));
    ASSERT_TRUE(oracle.has_value());
    EXPECT_LE(relative_gap(s.objective, *oracle), 1e-9);
    expect_certified(s);
  }
}

TEST(Bilevel, MiqpOptimumMovesContinuouslyWithTarget) {
  const MarketInstance m = tilted_market(3.0);
  double last = -1.0;
  for (double z = 0.80; z <= 0.9001; z += 0.01) {
    const DesiredDistribution Z{(Vec(2) << z, 1.0 - z).finished()};
    const double v = solve_miqp(build_program(m, Z, initial_beta(m), BilevelMode::Miqp)).objective;
    // Objective is 2·(10z − 3)², so one step of 0.01 changes it by O(0.01).
    EXPECT_NEAR(v, 2.0 * std::pow(10 * z - 3, 2), 1e-8);
    if (last >= 0.0) EXPECT_LE(std::abs(v - last), 3.0);
    last = v;
  }
}

TEST(Bilevel, BranchAndBoundAgreesWithEnumerationOnRandomInstances) {
  std::mt19937_64 rng(53);
  for (int k = 0; k < 6; ++k) {
    stackprice::testing::RandomMarketOptions opt;
    opt.cap_fraction = 0.6;
    const MarketInstance m = random_market(rng, 2 + k % 2, 2, opt);
    Vec z = uniform_vec(rng, m.num_stations(), 0.05, 1.0);
    z /= z.sum();
    z(z.size() - 1) = 1.0 - z.head(z.size() - 1).sum();
    ExactOptions bnb;
    bnb.strategy = SearchStrategy::BranchAndBound;
    const BilevelSolution s = solve_miqp(build_program(m, {z}, initial_beta(m), BilevelMode::Miqp), bnb);
    const auto oracle = enumerate_objective(build_program(m, {z}, s.beta_used, BilevelMode::Miqp));
    ASSERT_TRUE(oracle.has_value());
    EXPECT_LE(relative_gap(s.objective, *oracle), 1e-9) << "instance " << k;
  }
}

TEST(Bilevel, EnumerationIsIndependentOfWorkerCount) {
  std::mt19937_64 rng(54);
  stackprice::testing::RandomMarketOptions opt;
  opt.cap_fraction = 0.45;
  const MarketInstance m = random_market(rng, 3, 2, opt);
  const BigMProgram p = build_program(m, {Vec::Constant(3, 1.0 / 3)}, initial_beta(m), BilevelMode::Miqp);
  ExactOptions one;
  one.strategy = SearchStrategy::Enumerate;
  ExactOptions four = one;
  four.jobs = 4;
  const BilevelSolution a = solve_miqp(p, one);
  const BilevelSolution b = solve_miqp(p, four);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.pattern, b.pattern);
  EXPECT_EQ(a.pi, b.pi);
}

TEST(Bilevel, CalibrationAcceptsGenerousStart) {
  const MarketInstance m = tilted_market();
  const DesiredDistribution Z{(Vec(2) << 0.525, 0.475).finished()};
  const BetaCalibration c = calibrate_beta(m, Z, BilevelMode::Feasibility);
  EXPECT_EQ(c.beta, initial_beta(m));
  EXPECT_EQ(c.solution.beta_trail.size(), 1u);
}

TEST(Bilevel, CalibrationDoublesFromTinyStart) {
  const MarketInstance m = tilted_market();
  const DesiredDistribution Z{(Vec(2) << 0.525, 0.475).finished()};
  const BetaCalibration c = calibrate_beta(m, Z, BilevelMode::Feasibility, {}, 1e-3);
  ASSERT_EQ(c.solution.status, BilevelStatus::Feasible);
  EXPECT_GT(c.solution.beta_trail.size(), 1u);
  EXPECT_GT(c.beta, 1e-3);
  for (std::size_t k = 1; k < c.solution.beta_trail.size(); ++k) {
    EXPECT_DOUBLE_EQ(c.solution.beta_trail[k].beta, 2.0 * c.solution.beta_trail[k - 1].beta);
  }
  expect_certified(c.solution);
  EXPECT_NEAR(replay_reward(m, c.solution.pi, Z), 1.0, 1e-6);
}

TEST(Bilevel, DoublingCapRaisesSolverFailure) {
  const MarketInstance m = tilted_market();
  const DesiredDistribution Z{(Vec(2) << 0.525, 0.475).finished()};
  ExactOptions opt;
  opt.max_doublings = 2;
  EXPECT_THROW(calibrate_beta(m, Z, BilevelMode::Feasibility, opt, 1e-6), SolverFailure);
}

TEST(Bilevel, ModeMismatchIsRejected) {
  const MarketInstance m = tilted_market();
  const DesiredDistribution Z{(Vec(2) << 0.5, 0.5).finished()};
  EXPECT_THROW(solve_miqp(build_program(m, Z, 10.0)), InvalidInput);
  EXPECT_THROW(build_program(m, Z, -1.0), InvalidInput);
}
