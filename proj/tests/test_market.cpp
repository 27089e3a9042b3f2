#include "stackprice/market.hpp"

#include "support.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

using namespace stackprice;
using stackprice::testing::plain_market;
using stackprice::testing::random_market;
using stackprice::testing::uniform_vec;

TEST(Market, IdentityCostsGiveTextbookMatrices) {
  const MarketInstance m = plain_market(Vec::Ones(2), Vec::Zero(2), {10, 10}, Vec::Ones(2));
  EXPECT_TRUE(m.P().isApprox(2.0 * Mat::Identity(2, 2)));
  EXPECT_TRUE(m.Q().isApprox(Mat::Identity(2, 2)));
  EXPECT_EQ(m.r(0), Vec::Zero(2));
  EXPECT_EQ(m.r(1), Vec::Zero(2));
}

TEST(Market, CapacityEntersLinearTermWithNegativeSign) {
  const Vec tau = (Vec(4) << 15, 60, 35, 50).finished();
  const MarketInstance m = plain_market(Vec::Ones(4), tau, {5}, Vec::Ones(4));
  EXPECT_EQ(m.r(0), -tau);

  const MarketInstance w = plain_market((Vec(2) << 1, 2).finished(), Vec::Ones(2), {5}, Vec::Ones(2));
  EXPECT_EQ(w.r(0), (Vec(2) << -1, -2).finished());
}

TEST(Market, NonnegativityRowsAreAppendedOnce) {
  const MarketInstance m = plain_market(Vec::Ones(3), Vec::Zero(3), {4}, Vec::Ones(3));
  EXPECT_EQ(m.company(0).G.rows(), 3);
  const auto [G, h] = with_nonnegativity(m.company(0).G, m.company(0).h, 3);
  EXPECT_EQ(G.rows(), 3);
  EXPECT_EQ(h, Vec::Zero(3));
}

TEST(Market, InvalidShapesAndEmptyPolytopesAreRejected) {
  Company co;
  co.fleet = 10;
  co.demand = Vec::Ones(2);
  co.e_arr = Vec::Zero(2);
  co.e_pro = Vec::Zero(2);
  co.G = Mat::Identity(2, 2);
  co.h = Vec::Constant(2, 3.0);  // caps sum to 6 < 10
  EXPECT_THROW(assemble_market(StationSet{Vec::Zero(2), Vec::Ones(2)}, {co}), Infeasible);

  co.h = Vec::Constant(2, 10.0);
  EXPECT_THROW(assemble_market(StationSet{Vec::Zero(2), (Vec(2) << 1, 0).finished()}, {co}),
               InvalidInput);
  co.demand = Vec::Ones(3);
  EXPECT_THROW(assemble_market(StationSet{Vec::Zero(2), Vec::Ones(2)}, {co}), InvalidInput);
}

TEST(Market, PseudoGradientMatchesDenseArithmetic) {
  const MarketInstance m = plain_market(Vec::Ones(2), Vec::Zero(2), {10, 10}, Vec::Ones(2));
  const Vec x = Vec::Constant(4, 5.0);
  EXPECT_EQ(pseudo_gradient(m, x, Vec::Zero(2)), Vec::Constant(4, 15.0));

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const MarketInstance r = random_market(rng, 3, 3);
    const Vec pi = uniform_vec(rng, 3, -5, 5);
    const Vec y = uniform_vec(rng, 9, 0, 10);
    Vec F2(9);
    for (int i = 0; i < 3; ++i) {
      F2.segment(3 * i, 3) = r.r(i) + r.company(i).demand.cwiseProduct(pi);
    }
    EXPECT_LE((pseudo_gradient(r, y, pi) - (r.pseudo_gradient_matrix() * y + F2))
                  .lpNorm<Eigen::Infinity>(),
              1e-10);
    EXPECT_LE((pseudo_gradient(r, Vec::Zero(9), Vec::Zero(3)).segment(3, 3) - r.r(1)).norm(), 1e-12);
  }
}

TEST(Market, ClosedFormEigenvaluesMatchDenseSpectrum) {
  std::mt19937_64 rng(4);
  for (int N = 1; N <= 4; ++N) {
    const MarketInstance m = random_market(rng, 3, N);
    Eigen::SelfAdjointEigenSolver<Mat> es(m.pseudo_gradient_matrix());
    EXPECT_NEAR(es.eigenvalues().maxCoeff(), m.f1_max_eigenvalue(), 1e-10);
    EXPECT_NEAR(es.eigenvalues().minCoeff(), m.f1_min_eigenvalue(), 1e-10);
    EXPECT_GT(m.f1_min_eigenvalue(), 0.0);
  }
}

TEST(Market, CompanyCostQuadraticForm) {
  const MarketInstance m = plain_market(Vec::Ones(2), Vec::Zero(2), {10}, Vec::Ones(2));
  // r = (0, 1) is obtained with a unit travel cost at the second station.
  Company co = m.company(0);
  co.e_arr(1) = 1.0;
  const MarketInstance w = assemble_market(m.stations(), {co});
  EXPECT_DOUBLE_EQ(company_cost(w, 0, Vec::Zero(2), Vec::Zero(2)), 0.0);
  const Vec x = (Vec(2) << 5.25, 4.75).finished();
  // ½xᵀ(2I)x + rᵀx evaluated term by term: 27.5625 + 22.5625 + 4.75.
  EXPECT_NEAR(company_cost(w, 0, x, Vec::Zero(2)), 54.875, 1e-12);

  // Central differences of the cost match the pseudo-gradient block.
  const Vec pi = (Vec(2) << 0.3, -0.7).finished();
  const Vec F = pseudo_gradient(w, x, pi);
  for (int j = 0; j < 2; ++j) {
    const Vec e = Vec::Unit(2, j) * 1e-4;
    const double fd = (company_cost(w, 0, x + e, pi) - company_cost(w, 0, x - e, pi)) / 2e-4;
    EXPECT_NEAR(fd, F(j), 1e-8);
  }
}

TEST(Market, LeaderObjectiveAndReward) {
  const MarketInstance m = plain_market(Vec::Ones(2), Vec::Zero(2), {5, 5}, Vec::Ones(2));
  const DesiredDistribution Z{(Vec(2) << 1, 0).finished()};
  EXPECT_DOUBLE_EQ(leader_objective(m, (Vec(4) << 0, 5, 0, 5).finished(), Z), 100.0);
  EXPECT_DOUBLE_EQ(leader_objective(m, (Vec(4) << 5, 0, 5, 0).finished(), Z), 0.0);

  EXPECT_DOUBLE_EQ(reward_from_distribution(Z.z, Z), 1.0);
  EXPECT_NEAR(reward_from_distribution((Vec(2) << 0, 1).finished(), Z), 0.0, 1e-15);
  const DesiredDistribution table{(Vec(4) << 0.37, 0.19, 0.27, 0.17).finished()};
  EXPECT_NEAR(reward_from_distribution((Vec(4) << 0.35, 0.20, 0.26, 0.19).finished(), table), 0.9776,
              5e-5);
  EXPECT_NEAR(reward((Vec(4) << 5, 0, 5, 0).finished(), m.fleets(), Z), 1.0, 1e-15);
}

TEST(Market, DesiredDistributionValidation) {
  EXPECT_NO_THROW((DesiredDistribution{(Vec(2) << 0.5, 0.5).finished()}.validate()));
  EXPECT_THROW((DesiredDistribution{(Vec(2) << 0.6, 0.5).finished()}.validate()), InvalidInput);
  EXPECT_THROW((DesiredDistribution{(Vec(2) << 1.5, -0.5).finished()}.validate()), InvalidInput);
}
