#include "stackprice/equilibrium.hpp"

#include "stackprice/lp.hpp"
#include "stackprice/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace stackprice {

PolytopeProjector::PolytopeProjector(const Company& company) {
  const int M = static_cast<int>(company.demand.size());
  require(company.G.cols() == M || company.G.rows() == 0, "projector: G has wrong column count");
  problem_.H = Mat::Identity(M, M);
  problem_.g = Vec::Zero(M);
  problem_.A_eq = Mat::Ones(1, M);
  problem_.b_eq = Vec::Constant(1, company.fleet);
  problem_.A_in = company.G.rows() > 0 ? company.G : Mat(0, M);
  problem_.b_in = company.G.rows() > 0 ? company.h : Vec(0);

  LpProblem lp;
  lp.c = Vec::Zero(M);
  lp.A_ub = problem_.A_in;
  lp.b_ub = problem_.b_in;
  lp.A_eq = problem_.A_eq;
  lp.b_eq = problem_.b_eq;
  const LpResult start = solve_lp(lp);
  if (!start.optimal()) throw Infeasible("projection target polytope is empty");
  warm_ = start.x;
}

Vec PolytopeProjector::project(const Vec& y) {
  require(y.size() == dimension(), "project: point has wrong length");
  problem_.g = -y;
  QpOptions opt;
  opt.feasibility_tol = 1e-12;
  opt.optimality_tol = 1e-13;
  QpResult r = solve_qp_from(problem_, warm_, opt, warm_active_);
  if (!r.optimal()) throw SolverFailure(std::string("projection QP failed: ") + to_string(r.status));
  warm_ = r.x;
  warm_active_ = r.working_set;
  last_residual_ = qp_kkt_residual(problem_, r).max();
  return r.x;
}

Vec project_onto_polytope(const Company& company, const Vec& y) {
  PolytopeProjector projector(company);
  return projector.project(y);
}

namespace {

std::vector<PolytopeProjector> make_projectors(const MarketInstance& m) {
  std::vector<PolytopeProjector> out;
  out.reserve(static_cast<std::size_t>(m.num_companies()));
  for (const auto& co : m.companies()) out.emplace_back(co);
  return out;
}

Vec project_joint(const MarketInstance& m, std::vector<PolytopeProjector>& proj, const Vec& y) {
  Vec x(y.size());
  const int M = m.num_stations();
  for (int i = 0; i < m.num_companies(); ++i) {
    x.segment(i * M, M) = proj[static_cast<std::size_t>(i)].project(y.segment(i * M, M));
  }
  return x;
}

std::vector<int> active_rows(const Company& co, const Vec& xi) {
  std::vector<int> rows;
  for (Eigen::Index k = 0; k < co.G.rows(); ++k) {
    // Ties at the margin resolve to active.
    if (co.h(k) - co.G.row(k).dot(xi) <= kActivityMargin) rows.push_back(static_cast<int>(k));
  }
  return rows;
}

struct CompanyDuals {
  Vec lambda;
  double nu = 0.0;
  double residual = 0.0;
};

// Multipliers for one company: nonnegative least squares on its stationarity
// rows. At degenerate vertices the multipliers are not unique and the
// minimum-norm solution can have negative entries, so the sign is enforced.
CompanyDuals active_duals(const Company& co, const Vec& Fi, const std::vector<int>& rows) {
  const auto M = Fi.size();
  const auto k = static_cast<Eigen::Index>(rows.size());
  Mat B(M, k + 1);
  for (Eigen::Index a = 0; a < k; ++a) B.col(a) = co.G.row(rows[static_cast<std::size_t>(a)]).transpose();
  B.col(k).setOnes();

  QpProblem q;
  q.H = B.transpose() * B;
  q.H.diagonal().array() += 1e-14 * (1.0 + q.H.diagonal().maxCoeff());
  q.g = B.transpose() * Fi;
  q.A_eq = Mat(0, k + 1);
  q.b_eq = Vec(0);
  q.A_in = Mat::Zero(k, k + 1);
  q.A_in.leftCols(k) = -Mat::Identity(k, k);
  q.b_in = Vec::Zero(k);
  Vec z;
  const QpResult r = solve_qp_from(q, Vec::Zero(k + 1), QpOptions{});
  if (r.optimal()) {
    z = r.x;
  } else {
    z = Eigen::CompleteOrthogonalDecomposition<Mat>(B).solve(-Fi);
  }

  CompanyDuals out;
  out.lambda = Vec::Zero(co.G.rows());
  for (Eigen::Index a = 0; a < k; ++a) out.lambda(rows[static_cast<std::size_t>(a)]) = std::max(0.0, z(a));
  out.nu = z(k);
  Vec stat = Fi + Vec::Constant(M, out.nu);
  if (co.G.rows() > 0) stat += co.G.transpose() * out.lambda;
  out.residual = stat.cwiseAbs().maxCoeff();
  return out;
}

bool is_interior(const MarketInstance& m, const Vec& x, double margin) {
  for (int i = 0; i < m.num_companies(); ++i) {
    const auto& co = m.company(i);
    if (co.G.rows() == 0) continue;
    const Vec slack = co.h - co.G * m.block(x, i);
    if (slack.minCoeff() <= margin) return false;
  }
  return true;
}

// Solves the equality-constrained KKT system on the active set detected at x.
// Returns false when the resulting point is not a valid equilibrium.
bool polish(const MarketInstance& m, const PriceVector& pi, EquilibriumResult& res) {
  const int M = m.num_stations();
  const int N = m.num_companies();
  std::vector<std::vector<int>> active(static_cast<std::size_t>(N));
  int n_active = 0;
  for (int i = 0; i < N; ++i) {
    active[i] = active_rows(m.company(i), m.block(res.x_star, i));
    n_active += static_cast<int>(active[i].size());
  }
  const int nx = N * M;
  const int dim = nx + N + n_active;
  Mat K = Mat::Zero(dim, dim);
  Vec rhs = Vec::Zero(dim);
  K.topLeftCorner(nx, nx) = m.pseudo_gradient_matrix();
  const Vec F2 = pseudo_gradient(m, Vec::Zero(nx), pi);
  rhs.head(nx) = -F2;
  int col = nx + N;
  for (int i = 0; i < N; ++i) {
    K.block(i * M, nx + i, M, 1).setOnes();
    K.block(nx + i, i * M, 1, M).setOnes();
    rhs(nx + i) = m.company(i).fleet;
    for (int k : active[i]) {
      const auto g = m.company(i).G.row(k);
      K.block(i * M, col, M, 1) = g.transpose();
      K.block(col, i * M, 1, M) = g;
      rhs(col) = m.company(i).h(k);
      ++col;
    }
  }
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(K);
  const Vec sol = cod.solve(rhs);
  if ((K * sol - rhs).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + rhs.cwiseAbs().maxCoeff())) return false;

  const Vec x = sol.head(nx);
  if ((x - res.x_star).cwiseAbs().maxCoeff() > 1e-3 * (1.0 + x.cwiseAbs().maxCoeff())) return false;
  const Vec F = pseudo_gradient(m, x, pi);
  const double stat_tol = 1e-9 * (1.0 + F.cwiseAbs().maxCoeff());
  std::vector<Vec> lambda(static_cast<std::size_t>(N));
  Vec nu(N);
  for (int i = 0; i < N; ++i) {
    const auto& co = m.company(i);
    if (co.G.rows() && (co.G * x.segment(i * M, M) - co.h).maxCoeff() > 1e-9) return false;
    const CompanyDuals d = active_duals(co, F.segment(i * M, M), active[i]);
    if (d.residual > stat_tol) return false;
    lambda[i] = d.lambda;
    nu(i) = d.nu;
  }

  res.x_star = x;
  res.nu_star = nu;
  res.lambda_star = std::move(lambda);
  res.polished = true;
  return true;
}

}  // namespace

double natural_map_residual(const MarketInstance& m, const Vec& x, const PriceVector& pi,
                            double step) {
  auto proj = make_projectors(m);
  const Vec y = project_joint(m, proj, x - step * pseudo_gradient(m, x, pi));
  return (x - y).cwiseAbs().maxCoeff();
}

void recover_duals(const MarketInstance& m, const PriceVector& pi, EquilibriumResult& res) {
  const int M = m.num_stations();
  const int N = m.num_companies();
  const Vec F = pseudo_gradient(m, res.x_star, pi);
  res.lambda_star.assign(static_cast<std::size_t>(N), Vec());
  res.nu_star = Vec::Zero(N);
  for (int i = 0; i < N; ++i) {
    const auto& co = m.company(i);
    const CompanyDuals d = active_duals(co, F.segment(i * M, M), active_rows(co, m.block(res.x_star, i)));
    res.lambda_star[i] = d.lambda;
    res.nu_star(i) = d.nu;
  }
}

EquilibriumResult solve_vne(const MarketInstance& m, const PriceVector& pi, const SolverConfig& cfg) {
  require(m.num_companies() >= 1 && m.num_stations() >= 1, "solve_vne: empty market");
  require(pi.size() == m.num_stations(), "solve_vne: price vector has wrong length");
  require(pi.allFinite(), "solve_vne: prices must be finite");
  const double max_step = 1.0 / m.f1_max_eigenvalue();
  // Extragradient stalls at exactly 1/λ_max when F₁ is a multiple of the
  // identity, so its default sits strictly inside the admissible range.
  const double default_step = cfg.scheme == VeScheme::Extragradient ? 0.5 * max_step : max_step;
  const double eta = cfg.step > 0.0 ? cfg.step : default_step;
  require(eta <= max_step * (1.0 + 1e-12), "solve_vne: step exceeds 1/λ_max(F₁)");
  require(cfg.tol > 0.0, "solve_vne: tolerance must be positive");

  auto proj = make_projectors(m);
  const int M = m.num_stations();
  Vec x(m.joint_size());
  if (cfg.start) {
    require(cfg.start->size() == m.joint_size(), "solve_vne: start point has wrong length");
    x = project_joint(m, proj, *cfg.start);
  } else {
    for (int i = 0; i < m.num_companies(); ++i) {
      x.segment(i * M, M).setConstant(static_cast<double>(m.company(i).fleet) / M);
    }
    x = project_joint(m, proj, x);
  }

  EquilibriumResult res;
  Vec best = x;
  double best_residual = std::numeric_limits<double>::infinity();
  bool converged = false;
  for (int k = 0; k < cfg.max_iter; ++k) {
    Vec y = project_joint(m, proj, x - eta * pseudo_gradient(m, x, pi));
    const double residual = (x - y).cwiseAbs().maxCoeff();
    Vec next;
    if (cfg.scheme == VeScheme::Extragradient) {
      next = project_joint(m, proj, x - eta * pseudo_gradient(m, y, pi));
    } else {
      next = std::move(y);
    }
    if (residual < best_residual) {
      best_residual = residual;
      best = x;
    }
    if (cfg.on_iteration) cfg.on_iteration(k, x, next);
    x = std::move(next);
    res.iterations = k + 1;
    if (residual <= cfg.tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw EquilibriumNotConverged("solve_vne: no convergence within " +
                                      std::to_string(cfg.max_iter) + " iterations (best residual " +
                                      std::to_string(best_residual) + ")",
                                  best, best_residual);
  }

  res.x_star = x;
  if (!(cfg.polish && polish(m, pi, res))) recover_duals(m, pi, res);
  res.residual = (res.x_star -
                  project_joint(m, proj, res.x_star - eta * pseudo_gradient(m, res.x_star, pi)))
                     .cwiseAbs()
                     .maxCoeff();
  res.interior = is_interior(m, res.x_star, kActivityMargin);
  return res;
}

InteriorSolution solve_interior_kkt(const MarketInstance& m, const PriceVector& pi) {
  require(pi.size() == m.num_stations(), "solve_interior_kkt: price vector has wrong length");
  const int M = m.num_stations();
  const int N = m.num_companies();
  const int nx = N * M;
  Mat K = Mat::Zero(nx + N, nx + N);
  Vec rhs(nx + N);
  K.topLeftCorner(nx, nx) = m.pseudo_gradient_matrix();
  rhs.head(nx) = -pseudo_gradient(m, Vec::Zero(nx), pi);
  for (int i = 0; i < N; ++i) {
    K.block(i * M, nx + i, M, 1).setOnes();
    K.block(nx + i, i * M, 1, M).setOnes();
    rhs(nx + i) = m.company(i).fleet;
  }
  Eigen::FullPivLU<Mat> lu(K);
  if (!lu.isInvertible()) throw SolverFailure("solve_interior_kkt: stacked KKT matrix is singular");
  const Vec sol = lu.solve(rhs);

  InteriorSolution out;
  out.x = sol.head(nx);
  out.nu = sol.tail(N);
  out.interior = true;
  for (int i = 0; i < N; ++i) {
    const auto& co = m.company(i);
    if (co.G.rows() == 0) continue;
    if ((co.G * out.x.segment(i * M, M) - co.h).maxCoeff() > -1e-9) out.interior = false;
  }
  return out;
}

KktReport verify_kkt(const MarketInstance& m, const EquilibriumResult& res, const PriceVector& pi,
                     double tolerance) {
  const int M = m.num_stations();
  const int N = m.num_companies();
  require(res.x_star.size() == m.joint_size(), "verify_kkt: x* has wrong length");
  require(static_cast<int>(res.lambda_star.size()) == N && res.nu_star.size() == N,
          "verify_kkt: dual dimensions do not match the market");
  const Vec F = pseudo_gradient(m, res.x_star, pi);
  KktReport report;
  for (int i = 0; i < N; ++i) {
    const auto& co = m.company(i);
    const Vec xi = m.block(res.x_star, i);
    const Vec& lam = res.lambda_star[i];
    require(lam.size() == co.G.rows(), "verify_kkt: λ has wrong length");
    CompanyKkt k;
    Vec stat = F.segment(i * M, M) + Vec::Constant(M, res.nu_star(i));
    if (co.G.rows() > 0) stat += co.G.transpose() * lam;
    k.stationarity = stat.cwiseAbs().maxCoeff();
    k.primal = std::abs(xi.sum() - co.fleet);
    if (co.G.rows() > 0) {
      const Vec gap = co.G * xi - co.h;
      k.primal = std::max(k.primal, std::max(gap.maxCoeff(), 0.0));
      k.complementarity = std::max(lam.cwiseProduct(gap).cwiseAbs().maxCoeff(),
                                   std::max(0.0, -lam.minCoeff()));
    }
    report.max_residual = std::max({report.max_residual, k.stationarity, k.primal, k.complementarity});
    report.companies.push_back(k);
  }
  report.pass = report.max_residual <= tolerance;
  return report;
}

}  // namespace stackprice
