#include "stackprice/equilibrium.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <limits>

using namespace stackprice;
using stackprice::testing::plain_market;
using stackprice::testing::random_interior_case;
using stackprice::testing::random_market;
using stackprice::testing::uniform_vec;

namespace {

Company simplex_company(int M, int fleet) {
  Company co;
  co.fleet = fleet;
  co.demand = Vec::Ones(M);
  co.e_arr = Vec::Zero(M);
  co.e_pro = Vec::Zero(M);
  // Nonnegativity rows, as market assembly would add them.
  co.G = -Mat::Identity(M, M);
  co.h = Vec::Zero(M);
  return co;
}

// Single company, C = I, r = (0, 1), N = 10.
MarketInstance tilted_market() {
  Company co = simplex_company(2, 10);
  co.e_arr(1) = 1.0;
  co.G.resize(0, 2);
  co.h.resize(0);
  return assemble_market(StationSet{Vec::Zero(2), Vec::Ones(2)}, {co});
}

// Brute-force projection onto {x₁ + x₂ = s, x ≥ 0} over a grid of step h.
Vec grid_projection_2d(const Vec& y, double s, double h) {
  Vec best(2);
  double best_d = std::numeric_limits<double>::infinity();
  for (double t = 0.0; t <= s + 1e-12; t += h) {
    const Vec x = (Vec(2) << t, s - t).finished();
    const double d = (x - y).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = x;
    }
  }
  return best;
}

}  // namespace

TEST(Projection, FeasiblePointIsFixed) {
  const Vec y = (Vec(3) << 1, 2, 3).finished();
  EXPECT_LE((project_onto_polytope(simplex_company(3, 6), y) - y).norm(), 1e-12);
}

TEST(Projection, SimplexExamples) {
  const Company co = simplex_company(2, 1);
  EXPECT_LE((project_onto_polytope(co, Vec::Ones(2)) - Vec::Constant(2, 0.5)).norm(), 1e-12);
  EXPECT_LE((project_onto_polytope(co, (Vec(2) << 2, -1).finished()) - (Vec(2) << 1, 0).finished())
                .norm(),
            1e-12);
}

TEST(Projection, MatchesDenseGridOracle) {
  std::mt19937_64 rng(21);
  Company co = simplex_company(2, 3);
  co.G = (Mat(3, 2) << 1, 0, -1, 0, 0, -1).finished();
  co.h = (Vec(3) << 2.0, 0.0, 0.0).finished();
  PolytopeProjector proj(co);
  for (int k = 0; k < 50; ++k) {
    const Vec y = uniform_vec(rng, 2, -4, 6);
    const Vec x = proj.project(y);
    Vec oracle = grid_projection_2d(y, 3.0, 1e-3);
    if (oracle(0) > 2.0) oracle = (Vec(2) << 2.0, 1.0).finished();
    // Grid resolution bounds the disagreement.
    EXPECT_LE((x - oracle).lpNorm<Eigen::Infinity>(), 1e-3);
    EXPECT_LE(proj.last_residual(), 1e-9);
  }
}

TEST(Projection, EmptyPolytopeThrows) {
  Company co = simplex_company(2, 5);
  co.G = Mat::Identity(2, 2);
  co.h = Vec::Ones(2);
  EXPECT_THROW(PolytopeProjector{co}, Infeasible);
}

TEST(Equilibrium, SymmetricCompaniesSplitEvenly) {
  const MarketInstance m = plain_market(Vec::Ones(2), Vec::Zero(2), {10, 10}, Vec::Ones(2));
  const EquilibriumResult r = solve_vne(m, Vec::Zero(2));
  EXPECT_LE((r.x_star - Vec::Constant(4, 5.0)).lpNorm<Eigen::Infinity>(), 1e-8);
  EXPECT_NEAR(r.nu_star(0), -15.0, 1e-6);
  EXPECT_TRUE(r.interior);
  const InteriorSolution s = solve_interior_kkt(m, Vec::Zero(2));
  EXPECT_LE((s.x - Vec::Constant(4, 5.0)).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(Equilibrium, SingleCompanyLinearTilt) {
  const MarketInstance m = tilted_market();
  for (VeScheme scheme : {VeScheme::ProjectedGradient, VeScheme::Extragradient}) {
    SolverConfig cfg;
    cfg.scheme = scheme;
    const EquilibriumResult r = solve_vne(m, Vec::Zero(2), cfg);
    EXPECT_NEAR(r.x_star(0), 5.25, 1e-8);
    EXPECT_NEAR(r.x_star(1), 4.75, 1e-8);
    EXPECT_NEAR(r.nu_star(0), -10.5, 1e-6);
  }
  const InteriorSolution s = solve_interior_kkt(m, Vec::Zero(2));
  EXPECT_TRUE(s.interior);
  EXPECT_NEAR(s.x(0), 5.25, 1e-12);
  EXPECT_NEAR(s.nu(0), -10.5, 1e-12);
}

TEST(Equilibrium, CapacityRowCutsInteriorPoint) {
  Company co = simplex_company(2, 10);
  co.e_arr(1) = 1.0;
  co.G = (Mat(1, 2) << 1, 0).finished();
  co.h = Vec::Constant(1, 3.0);
  const MarketInstance m = assemble_market(StationSet{Vec::Zero(2), Vec::Ones(2)}, {co});
  EXPECT_FALSE(solve_interior_kkt(m, Vec::Zero(2)).interior);
  const EquilibriumResult r = solve_vne(m, Vec::Zero(2));
  EXPECT_FALSE(r.interior);
  EXPECT_NEAR(r.x_star(0), 3.0, 1e-8);
  EXPECT_NEAR(r.x_star(1), 7.0, 1e-8);
  EXPECT_GT(r.lambda_star[0](0), 0.0);
  EXPECT_TRUE(verify_kkt(m, r, Vec::Zero(2)).pass);
}

TEST(Equilibrium, RandomInteriorInstancesMatchLinearOracle) {
  std::mt19937_64 rng(31);
  for (int k = 0; k < 30; ++k) {
    const auto c = random_interior_case(rng, 2 + k % 3, 1 + k % 3);
    const EquilibriumResult r = solve_vne(c.market, c.pi);
    EXPECT_LE((r.x_star - c.kkt.x).lpNorm<Eigen::Infinity>(), 1e-6) << "instance " << k;
    EXPECT_TRUE(verify_kkt(c.market, r, c.pi).pass);
  }
}

TEST(Equilibrium, ConstrainedInstancesPassKktAndFixedPoint) {
  std::mt19937_64 rng(32);
  for (int k = 0; k < 30; ++k) {
    stackprice::testing::RandomMarketOptions opt;
    opt.cap_fraction = 0.45;
    const MarketInstance m = random_market(rng, 3, 1 + k % 3, opt);
    const Vec pi = uniform_vec(rng, 3, -3, 3);
    const EquilibriumResult r = solve_vne(m, pi);
    const KktReport rep = verify_kkt(m, r, pi);
    EXPECT_TRUE(rep.pass) << "instance " << k << " residual " << rep.max_residual;
    EXPECT_LE(natural_map_residual(m, r.x_star, pi, 1.0 / m.f1_max_eigenvalue()), 1e-8);
  }
}

TEST(Equilibrium, VariationalInequalityHoldsAgainstFeasiblePoints) {
  // ⟨F(x*), y − x*⟩ ≥ 0 for every feasible y.
  std::mt19937_64 rng(33);
  const MarketInstance m = random_market(rng, 3, 2);
  const Vec pi = uniform_vec(rng, 3, -5, 5);
  const EquilibriumResult r = solve_vne(m, pi);
  const Vec F = pseudo_gradient(m, r.x_star, pi);
  for (int k = 0; k < 200; ++k) {
    Vec y(6);
    for (int i = 0; i < 2; ++i) {
      Vec b = uniform_vec(rng, 3, 0, 1);
      y.segment(3 * i, 3) = b * m.company(i).fleet / b.sum();
    }
    EXPECT_GE(F.dot(y - r.x_star), -1e-6);
  }
}

TEST(Equilibrium, PerturbedSolutionFailsCertification) {
  const MarketInstance m = plain_market(Vec::Ones(2), Vec::Zero(2), {10, 10}, Vec::Ones(2));
  EquilibriumResult r = solve_vne(m, Vec::Zero(2));
  ASSERT_TRUE(verify_kkt(m, r, Vec::Zero(2)).pass);

  EquilibriumResult moved = r;
  moved.x_star(0) += 0.1;
  const KktReport rep = verify_kkt(m, moved, Vec::Zero(2));
  EXPECT_FALSE(rep.pass);
  EXPECT_GE(rep.max_residual, 0.05);

  EquilibriumResult negative = r;
  negative.lambda_star[0](0) = -1.0;
  EXPECT_FALSE(verify_kkt(m, negative, Vec::Zero(2)).pass);
}

TEST(Equilibrium, IterationBudgetErrorCarriesBestIterate) {
  std::mt19937_64 rng(34);
  const MarketInstance m = random_market(rng, 4, 3);
  SolverConfig cfg;
  cfg.max_iter = 2;
  cfg.tol = 1e-14;
  try {
    solve_vne(m, Vec::Zero(4), cfg);
    FAIL() << "expected EquilibriumNotConverged";
  } catch (const EquilibriumNotConverged& e) {
    EXPECT_EQ(e.best_iterate().size(), 12);
    EXPECT_GT(e.residual(), 0.0);
  }
}

TEST(Equilibrium, ContractionPerIterationIsMonotone) {
  // The distance to the solution never grows along projected-gradient iterates.
  std::mt19937_64 rng(35);
  const MarketInstance m = random_market(rng, 3, 3);
  const Vec pi = uniform_vec(rng, 3, -2, 2);
  const Vec x_star = solve_vne(m, pi).x_star;
  std::vector<double> dist;
  SolverConfig cfg;
  cfg.polish = false;
  cfg.on_iteration = [&](int, const Vec&, const Vec& next) { dist.push_back((next - x_star).norm()); };
  solve_vne(m, pi, cfg);
  ASSERT_GT(dist.size(), 1u);
  for (std::size_t k = 1; k < dist.size(); ++k) EXPECT_LE(dist[k], dist[k - 1] + 1e-7);
}

TEST(Equilibrium, StartingPointDoesNotChangeAnswer) {
  std::mt19937_64 rng(36);
  const MarketInstance m = random_market(rng, 3, 2);
  const Vec pi = uniform_vec(rng, 3, -2, 2);
  SolverConfig a;
  SolverConfig b;
  b.start = uniform_vec(rng, 6, -10, 30);
  EXPECT_LE((solve_vne(m, pi, a).x_star - solve_vne(m, pi, b).x_star).lpNorm<Eigen::Infinity>(), 1e-7);
}
