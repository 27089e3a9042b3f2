#include "stackprice/exploration.hpp"

#include "stackprice/lp.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace stackprice {

bool PriceBox::contains(const PriceVector& pi, double tol) const {
  if (pi.size() != lo.size()) return false;
  for (Eigen::Index j = 0; j < pi.size(); ++j) {
    if (pi(j) < lo(j) - tol || pi(j) > hi(j) + tol) return false;
  }
  return true;
}

PriceBox uniform_box(int num_stations, double lo, double hi) {
  require(num_stations >= 1 && lo <= hi, "uniform_box: invalid bounds");
  return {Vec::Constant(num_stations, lo), Vec::Constant(num_stations, hi)};
}

ExplorationBounds compute_bounds(const MarketInstance& m) {
  const int M = m.num_stations();
  const int N = m.num_companies();
  ExplorationBounds b;
  // P = 2C is diagonal.
  const Vec p_inv = m.P().diagonal().cwiseInverse();
  b.alpha = 1.0 / p_inv.sum();
  b.Psi = Mat::Identity(M, M) - b.alpha * Vec::Ones(M) * p_inv.transpose();

  b.r_bar_max = -std::numeric_limits<double>::infinity();
  b.r_bar_min = std::numeric_limits<double>::infinity();
  b.G_pi.resize(N * M, M);
  for (int i = 0; i < N; ++i) {
    const Vec r_bar = b.Psi * m.r(i);
    b.r_bar_max = std::max(b.r_bar_max, r_bar.maxCoeff());
    b.r_bar_min = std::min(b.r_bar_min, r_bar.minCoeff());
    b.G_pi.block(i * M, 0, M, M) = b.Psi * m.company(i).demand.asDiagonal();
  }

  const double c_max = m.stations().c.maxCoeff();
  const double n_tot = m.total_fleet();
  const double n_max = m.max_fleet();
  const double n_min = m.min_fleet();
  b.z_bar = (c_max - b.alpha / 2.0) * n_tot + (c_max + b.alpha / 2.0) * n_max;
  b.z_under = b.alpha / 2.0 * (n_min - n_tot);
  b.gamma = b.alpha * n_min - b.r_bar_max - b.z_bar;
  b.Gamma = b.alpha * n_max - b.r_bar_min - b.z_under;
  return b;
}

bool membership_relaxed(const ExplorationBounds& b, const PriceVector& pi, double tol) {
  require(pi.size() == b.num_stations(), "membership_relaxed: price vector has wrong length");
  const Vec v = b.G_pi * pi;
  return (v.array() >= b.gamma - tol).all() && (v.array() <= b.Gamma + tol).all();
}

const PriceBox& BoxSuperset::require_bounded() const {
  if (!bounded()) {
    throw Unbounded("exploration polytope has unbounded coordinate " +
                    std::to_string(unbounded_coordinates.front()) +
                    "; supply an ambient price box instead");
  }
  return box;
}

BoxSuperset box_superset(const ExplorationBounds& b) {
  const int M = b.num_stations();
  const Eigen::Index rows = b.G_pi.rows();
  LpProblem lp;
  lp.A_ub.resize(2 * rows, M);
  lp.A_ub.topRows(rows) = b.G_pi;
  lp.A_ub.bottomRows(rows) = -b.G_pi;
  lp.b_ub.resize(2 * rows);
  lp.b_ub.head(rows).setConstant(b.Gamma);
  lp.b_ub.tail(rows).setConstant(-b.gamma);
  lp.A_eq.resize(0, M);
  lp.b_eq.resize(0);

  BoxSuperset out;
  out.box.lo = Vec::Constant(M, -std::numeric_limits<double>::infinity());
  out.box.hi = Vec::Constant(M, std::numeric_limits<double>::infinity());
  for (int j = 0; j < M; ++j) {
    bool unbounded = false;
    for (double sense : {1.0, -1.0}) {
      lp.c = Vec::Zero(M);
      lp.c(j) = sense;
      const LpResult r = solve_lp(lp);
      if (r.status == LpStatus::Unbounded) {
        unbounded = true;
        continue;
      }
      if (r.status == LpStatus::Infeasible) throw Infeasible("exploration polytope is empty");
      if (!r.optimal()) throw SolverFailure("box_superset: LP iteration limit reached");
      (sense > 0 ? out.box.lo : out.box.hi)(j) = r.x(j);
      out.vertices.push_back(r.x);
    }
    if (unbounded) out.unbounded_coordinates.push_back(j);
  }
  return out;
}

PriceVector sample_uniform(const PriceBox& box, std::mt19937_64& rng) {
  require(box.finite(), "sample_uniform: box must be finite");
  PriceVector pi(box.size());
  for (int j = 0; j < box.size(); ++j) {
    require(box.lo(j) <= box.hi(j), "sample_uniform: inverted interval");
    if (box.lo(j) == box.hi(j)) {
      pi(j) = box.lo(j);
      continue;
    }
    std::uniform_real_distribution<double> u(box.lo(j), box.hi(j));
    pi(j) = u(rng);
  }
  return pi;
}

PriceVector sample_uniform(const PriceBox& box, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_uniform(box, rng);
}

}  // namespace stackprice
