#include "stackprice/market.hpp"

#include "stackprice/lp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace stackprice {

void DesiredDistribution::validate() const {
  require(z.size() >= 1, "desired distribution must be nonempty");
  for (Eigen::Index j = 0; j < z.size(); ++j) {
    require(std::isfinite(z(j)) && z(j) >= 0.0 && z(j) <= 1.0,
            "desired distribution entries must lie in [0,1]");
  }
  require(std::abs(z.sum() - 1.0) <= 1e-12, "desired distribution must sum to 1");
}

Vec MarketInstance::fleets() const {
  Vec n(num_companies());
  for (int i = 0; i < num_companies(); ++i) n(i) = companies_[i].fleet;
  return n;
}

double MarketInstance::total_fleet() const {
  double total = 0.0;
  for (const auto& c : companies_) total += c.fleet;
  return total;
}

int MarketInstance::min_fleet() const {
  int v = companies_.front().fleet;
  for (const auto& c : companies_) v = std::min(v, c.fleet);
  return v;
}

int MarketInstance::max_fleet() const {
  int v = companies_.front().fleet;
  for (const auto& c : companies_) v = std::max(v, c.fleet);
  return v;
}

Vec MarketInstance::aggregate(const Vec& x) const {
  require(x.size() == joint_size(), "joint strategy has wrong length");
  Vec total = Vec::Zero(num_stations());
  for (int i = 0; i < num_companies(); ++i) total += block(x, i);
  return total;
}

Mat MarketInstance::pseudo_gradient_matrix() const {
  const int M = num_stations();
  const int N = num_companies();
  const Mat C = stations_.c.asDiagonal();
  Mat F1 = Mat::Zero(N * M, N * M);
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      F1.block(i * M, j * M, M, M) = (i == j ? 2.0 : 1.0) * C;
    }
  }
  return F1;
}

double MarketInstance::f1_max_eigenvalue() const {
  return (num_companies() + 1) * stations_.c.maxCoeff();
}

double MarketInstance::f1_min_eigenvalue() const {
  // I_N + 1 1ᵀ has eigenvalue 1 only when N ≥ 2; for N = 1 it is the scalar 2.
  const double factor = num_companies() == 1 ? 2.0 : 1.0;
  return factor * stations_.c.minCoeff();
}

std::pair<Mat, Vec> with_nonnegativity(const Mat& G, const Vec& h, int M) {
  require(G.rows() == h.size(), "G and h row counts differ");
  require(G.rows() == 0 || G.cols() == M, "G must have one column per station");
  std::vector<int> missing;
  for (int j = 0; j < M; ++j) {
    bool found = false;
    for (Eigen::Index k = 0; k < G.rows() && !found; ++k) {
      if (h(k) != 0.0 || G(k, j) >= 0.0) continue;
      // Row must be a negative multiple of e_j.
      bool unit = true;
      for (int l = 0; l < M; ++l) {
        if (l != j && G(k, l) != 0.0) unit = false;
      }
      found = unit;
    }
    if (!found) missing.push_back(j);
  }
  const Eigen::Index extra = static_cast<Eigen::Index>(missing.size());
  Mat G2(G.rows() + extra, M);
  Vec h2(G.rows() + extra);
  if (G.rows() > 0) {
    G2.topRows(G.rows()) = G;
    h2.head(G.rows()) = h;
  }
  for (Eigen::Index k = 0; k < extra; ++k) {
    G2.row(G.rows() + k).setZero();
    G2(G.rows() + k, missing[static_cast<std::size_t>(k)]) = -1.0;
    h2(G.rows() + k) = 0.0;
  }
  return {G2, h2};
}

MarketInstance assemble_market(StationSet stations, std::vector<Company> companies) {
  const int M = stations.size();
  require(M >= 1, "market needs at least one station");
  require(stations.tau.size() == M, "tau must have one entry per station");
  require(!companies.empty(), "market needs at least one company");
  for (int j = 0; j < M; ++j) {
    require(std::isfinite(stations.c(j)) && stations.c(j) > 0.0,
            "queuing cost coefficients must be strictly positive (c_" + std::to_string(j) + ")");
    require(std::isfinite(stations.tau(j)) && stations.tau(j) >= 0.0,
            "station capacities must be nonnegative");
  }

  MarketInstance m;
  const Mat C = stations.c.asDiagonal();
  m.P_ = 2.0 * C;
  m.Q_ = C;
  for (std::size_t i = 0; i < companies.size(); ++i) {
    auto& co = companies[i];
    const std::string who = "company " + std::to_string(i) + ": ";
    require(co.fleet >= 1, who + "fleet must be a positive integer");
    require(co.demand.size() == M && co.e_arr.size() == M && co.e_pro.size() == M,
            who + "per-station vectors must have length M");
    require((co.demand.array() >= 0.0).all(), who + "demand must be nonnegative");
    if (co.G.size() == 0) co.G.resize(0, M);
    auto [G, h] = with_nonnegativity(co.G, co.h, M);
    co.G = std::move(G);
    co.h = std::move(h);

    LpProblem lp;
    lp.c = Vec::Zero(M);
    lp.A_ub = co.G;
    lp.b_ub = co.h;
    lp.A_eq = Mat::Ones(1, M);
    lp.b_eq = Vec::Constant(1, co.fleet);
    if (!solve_lp(lp).optimal()) {
      throw Infeasible(who + "strategy polytope {1ᵀx = N_i, Gx ≤ h} is empty");
    }
    m.r_.push_back(co.e_arr - co.e_pro - C * stations.tau);
  }
  m.stations_ = std::move(stations);
  m.companies_ = std::move(companies);
  return m;
}

Vec pseudo_gradient(const MarketInstance& m, const Vec& x, const PriceVector& pi) {
  require(x.size() == m.joint_size(), "pseudo_gradient: joint strategy has wrong length");
  require(pi.size() == m.num_stations(), "pseudo_gradient: price vector has wrong length");
  const Vec total = m.aggregate(x);
  const auto& c = m.stations().c;
  Vec F(x.size());
  for (int i = 0; i < m.num_companies(); ++i) {
    const auto xi = m.block(x, i);
    // P xⁱ + Q (Σ − xⁱ) = C (xⁱ + Σ)
    F.segment(i * m.num_stations(), m.num_stations()) =
        c.cwiseProduct(xi + total) + m.r(i) + m.company(i).demand.cwiseProduct(pi);
  }
  return F;
}

double company_cost(const MarketInstance& m, int i, const Vec& x, const PriceVector& pi) {
  require(i >= 0 && i < m.num_companies(), "company_cost: company index out of range");
  require(x.size() == m.joint_size(), "company_cost: joint strategy has wrong length");
  require(pi.size() == m.num_stations(), "company_cost: price vector has wrong length");
  const Vec xi = m.block(x, i);
  const Vec others = m.aggregate(x) - xi;
  return 0.5 * xi.dot(m.P() * xi) + xi.dot(m.Q() * others) + m.r(i).dot(xi) +
         xi.dot(m.company(i).demand.cwiseProduct(pi));
}

double leader_objective(const MarketInstance& m, const Vec& x, const DesiredDistribution& Z) {
  require(Z.z.size() == m.num_stations(), "leader_objective: Z has wrong length");
  return 0.5 * (m.aggregate(x) - m.total_fleet() * Z.z).squaredNorm();
}

double reward_from_distribution(const Vec& x_hat, const DesiredDistribution& Z) {
  require(x_hat.size() == Z.z.size(), "reward: distribution length mismatch");
  const double r = 1.0 - (Z.z - x_hat).norm() / std::sqrt(2.0);
  return std::clamp(r, 0.0, 1.0);
}

double reward(const Vec& x, const Vec& fleets, const DesiredDistribution& Z) {
  const Eigen::Index M = Z.z.size();
  const Eigen::Index N = fleets.size();
  require(M >= 1 && N >= 1 && x.size() == N * M, "reward: joint strategy has wrong length");
  Vec total = Vec::Zero(M);
  for (Eigen::Index i = 0; i < N; ++i) total += x.segment(i * M, M);
  const double n_tot = fleets.sum();
  require(std::abs(total.sum() - n_tot) <= 1e-6 * std::max(1.0, n_tot),
          "reward: aggregate does not sum to the total charging fleet");
  require(total.minCoeff() >= -1e-9, "reward: aggregate has negative entries");
  return reward_from_distribution(total / n_tot, Z);
}

}  // namespace stackprice
