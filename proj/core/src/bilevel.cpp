#include "stackprice/bilevel.hpp"

#include "stackprice/lp.hpp"
#include "stackprice/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <thread>

namespace stackprice {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Variable layout of every node problem: [x | λ | ν | π | m_free].
struct Layout {
  int nx, L, N, M, nfree;
  int lam0() const { return nx; }
  int nu0() const { return nx + L; }
  int pi0() const { return nx + L + N; }
  int m0() const { return nx + L + N + M; }
  int dim() const { return m0() + nfree; }
};

// Per binary: -1 free (relaxed to [0,1]), 0 inactive, 1 active.
using Fixing = std::vector<signed char>;

struct NodeProblem {
  Layout layout;
  QpProblem qp;
  double constant = 0.0;  // objective offset ‖target‖² in MIQP mode
  std::vector<int> free_index;  // binary k → column offset among free m
};

class RowBuilder {
 public:
  explicit RowBuilder(int dim) : dim_(dim) {}
  Eigen::Ref<Eigen::RowVectorXd> add(double rhs) {
    rows_.emplace_back(Eigen::RowVectorXd::Zero(dim_));
    rhs_.push_back(rhs);
    return rows_.back();
  }
  void into(Mat& A, Vec& b) const {
    A.resize(static_cast<Eigen::Index>(rows_.size()), dim_);
    b.resize(static_cast<Eigen::Index>(rhs_.size()));
    for (std::size_t k = 0; k < rows_.size(); ++k) {
      A.row(static_cast<Eigen::Index>(k)) = rows_[k];
      b(static_cast<Eigen::Index>(k)) = rhs_[k];
    }
  }

 private:
  int dim_;
  std::vector<Eigen::RowVectorXd> rows_;
  std::vector<double> rhs_;
};

NodeProblem build_node(const BigMProgram& p, const Fixing& fix, double beta) {
  const int M = p.market.num_stations();
  const int N = p.market.num_companies();
  NodeProblem node;
  node.free_index.assign(static_cast<std::size_t>(p.L), -1);
  int nfree = 0;
  if (std::isfinite(beta)) {
    for (int k = 0; k < p.L; ++k) {
      if (fix[static_cast<std::size_t>(k)] < 0) node.free_index[static_cast<std::size_t>(k)] = nfree++;
    }
  }
  const Layout lay{N * M, p.L, N, M, nfree};
  node.layout = lay;
  const int dim = lay.dim();

  RowBuilder eq(dim), in(dim);
  for (int r = 0; r < lay.nx; ++r) {
    auto row = eq.add(-p.r_bar(r));
    row.segment(0, lay.nx) = p.P1.row(r);
    row.segment(lay.lam0(), lay.L) = p.P3.row(r);
    row.segment(lay.nu0(), N) = p.P2.row(r);
    row.segment(lay.pi0(), M) = p.S_bar.row(r);
  }
  for (int i = 0; i < N; ++i) eq.add(p.b_bar(i)).segment(0, lay.nx) = p.A_bar.row(i);
  if (p.mode == BilevelMode::Feasibility) {
    for (int j = 0; j < M; ++j) eq.add(p.target(j)).segment(0, lay.nx) = p.Lambda.row(j);
  }

  for (int k = 0; k < p.L; ++k) {
    const signed char f = fix[static_cast<std::size_t>(k)];
    const double hk = p.h_bar(k);
    if (f == 0) {
      eq.add(0.0)(lay.lam0() + k) = 1.0;
    } else {
      in.add(0.0)(lay.lam0() + k) = -1.0;
    }
    if (f == 1) {
      eq.add(hk).segment(0, lay.nx) = p.G_bar.row(k);
    } else {
      in.add(hk).segment(0, lay.nx) = p.G_bar.row(k);
    }
    if (!std::isfinite(beta)) continue;
    if (f == 1) {
      in.add(beta)(lay.lam0() + k) = 1.0;
    } else if (f == 0) {
      in.add(beta - hk).segment(0, lay.nx) = -p.G_bar.row(k);
    } else {
      const int col = lay.m0() + node.free_index[static_cast<std::size_t>(k)];
      auto a = in.add(0.0);
      a(lay.lam0() + k) = 1.0;
      a(col) = -beta;
      auto b = in.add(beta - hk);
      b.segment(0, lay.nx) = -p.G_bar.row(k);
      b(col) = beta;
      in.add(0.0)(col) = -1.0;
      in.add(1.0)(col) = 1.0;
    }
  }
  if (p.price_box) {
    for (int j = 0; j < M; ++j) {
      if (std::isfinite(p.price_box->hi(j))) in.add(p.price_box->hi(j))(lay.pi0() + j) = 1.0;
      if (std::isfinite(p.price_box->lo(j))) in.add(-p.price_box->lo(j))(lay.pi0() + j) = -1.0;
    }
  }

  eq.into(node.qp.A_eq, node.qp.b_eq);
  in.into(node.qp.A_in, node.qp.b_in);
  node.qp.H = Mat::Zero(dim, dim);
  node.qp.g = Vec::Zero(dim);
  if (p.mode == BilevelMode::Miqp) {
    node.qp.H.topLeftCorner(lay.nx, lay.nx) = 2.0 * p.Lambda.transpose() * p.Lambda;
    node.qp.g.head(lay.nx) = -2.0 * p.Lambda.transpose() * p.target;
    node.constant = p.target.squaredNorm();
  }
  return node;
}

struct NodeOutcome {
  bool feasible = false;
  double value = kInf;
  Vec v;
};

NodeOutcome solve_node(const BigMProgram& p, const NodeProblem& node) {
  NodeOutcome out;
  if (p.mode == BilevelMode::Feasibility) {
    LpProblem lp{Vec::Zero(node.layout.dim()), node.qp.A_in, node.qp.b_in, node.qp.A_eq,
                 node.qp.b_eq};
    const LpResult r = solve_lp(lp);
    if (r.status == LpStatus::Infeasible) return out;
    if (!r.optimal()) throw SolverFailure("exact bilevel: node LP failed (" + std::string(to_string(r.status)) + ")");
    out.feasible = true;
    out.value = 0.0;
    out.v = r.x;
    return out;
  }
  const QpResult r = solve_qp(node.qp);
  if (r.status == QpStatus::Infeasible) return out;
  if (!r.optimal()) throw SolverFailure("exact bilevel: node QP failed (" + std::string(to_string(r.status)) + ")");
  out.feasible = true;
  // Clamp tiny negative round-off of a sum of squares.
  out.value = std::max(0.0, r.objective + node.constant);
  out.v = r.x;
  return out;
}

Fixing pattern_fixing(unsigned long pattern, int L) {
  Fixing f(static_cast<std::size_t>(L));
  for (int k = 0; k < L; ++k) f[static_cast<std::size_t>(k)] = static_cast<signed char>((pattern >> k) & 1UL);
  return f;
}

NodeOutcome evaluate_leaf(const BigMProgram& p, const Fixing& fix, double beta) {
  return solve_node(p, build_node(p, fix, beta));
}

struct SearchResult {
  bool found = false;
  double value = kInf;
  Fixing fixing;
  long nodes = 0;
  long leaves = 0;
};

// Exhaustive search. Feasibility mode stops at the first feasible pattern in
// index order; MIQP keeps the smallest value, ties broken by lower index.
SearchResult enumerate(const BigMProgram& p, double beta, int jobs) {
  const unsigned long count = 1UL << p.L;
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(std::min<unsigned long>(count, 64))));
  struct Local {
    bool found = false;
    double value = kInf;
    unsigned long index = 0;
    long leaves = 0;
  };
  std::vector<Local> local(static_cast<std::size_t>(jobs));
  auto work = [&](int w) {
    Local& mine = local[static_cast<std::size_t>(w)];
    const unsigned long lo = count * static_cast<unsigned long>(w) / static_cast<unsigned long>(jobs);
    const unsigned long hi = count * static_cast<unsigned long>(w + 1) / static_cast<unsigned long>(jobs);
    for (unsigned long q = lo; q < hi; ++q) {
      const NodeOutcome o = evaluate_leaf(p, pattern_fixing(q, p.L), beta);
      ++mine.leaves;
      if (!o.feasible) continue;
      if (!mine.found || o.value < mine.value) {
        mine.found = true;
        mine.value = o.value;
        mine.index = q;
      }
      if (p.mode == BilevelMode::Feasibility) break;
    }
  };
  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  SearchResult res;
  for (const Local& l : local) {
    res.leaves += l.leaves;
    if (!l.found) continue;
    if (!res.found || l.value < res.value) {
      res.found = true;
      res.value = l.value;
      res.fixing = pattern_fixing(l.index, p.L);
    }
  }
  return res;
}

// Best-first (MIQP) or depth-first (feasibility) branch and bound on the
// big-M relaxation. Leaves are evaluated exactly as in enumeration.
SearchResult branch_and_bound(const BigMProgram& p, double beta) {
  struct Node {
    Fixing fix;
    double bound;
    long id;
  };
  auto worse = [](const Node& a, const Node& b) {
    if (a.bound != b.bound) return a.bound > b.bound;
    return a.id > b.id;
  };
  std::priority_queue<Node, std::vector<Node>, decltype(worse)> best_first(worse);
  std::vector<Node> stack;
  const bool dfs = p.mode == BilevelMode::Feasibility;
  long next_id = 0;
  auto push = [&](Node n) {
    if (dfs) {
      stack.push_back(std::move(n));
    } else {
      best_first.push(std::move(n));
    }
  };
  auto empty = [&] { return dfs ? stack.empty() : best_first.empty(); };
  auto pop = [&] {
    Node n;
    if (dfs) {
      n = std::move(stack.back());
      stack.pop_back();
    } else {
      n = best_first.top();
      best_first.pop();
    }
    return n;
  };

  SearchResult res;
  auto prune_above = [&] { return res.value + 1e-7 * (1.0 + std::abs(res.value)); };
  auto offer = [&](const Fixing& fix) {
    const NodeOutcome o = evaluate_leaf(p, fix, beta);
    ++res.leaves;
    if (o.feasible && (!res.found || o.value < res.value)) {
      res.found = true;
      res.value = o.value;
      res.fixing = fix;
    }
  };

  push({Fixing(static_cast<std::size_t>(p.L), -1), -kInf, next_id++});
  while (!empty()) {
    if (dfs && res.found) break;
    Node n = pop();
    if (res.found && n.bound > prune_above()) continue;
    ++res.nodes;
    const bool leaf = std::none_of(n.fix.begin(), n.fix.end(), [](signed char f) { return f < 0; });
    if (leaf) {
      offer(n.fix);
      continue;
    }
    const NodeProblem node = build_node(p, n.fix, beta);
    const NodeOutcome o = solve_node(p, node);
    if (!o.feasible) continue;
    if (res.found && o.value > prune_above()) continue;

    // Complementarity violation of each free binary, relative to β.
    const Layout& lay = node.layout;
    const Vec slack = p.h_bar - p.G_bar * o.v.head(lay.nx);
    const double scale = std::isfinite(beta) ? beta : 1.0;
    int branch = -1;
    double worst = 0.0;
    Fixing rounded = n.fix;
    for (int k = 0; k < p.L; ++k) {
      if (n.fix[static_cast<std::size_t>(k)] >= 0) continue;
      const double lam = o.v(lay.lam0() + k);
      const double viol = std::min(lam, slack(k)) / scale;
      rounded[static_cast<std::size_t>(k)] = static_cast<signed char>(slack(k) <= lam ? 1 : 0);
      if (branch < 0 || viol > worst) {
        branch = k;
        worst = viol;
      }
    }
    if (worst <= 1e-12) {
      // The relaxed point is complementary: its rounded pattern attains the
      // node bound, and so do all completions at best.
      offer(rounded);
      if (res.found && res.value <= o.value + 1e-12 * (1.0 + std::abs(o.value))) continue;
    }
    const double lam = o.v(lay.lam0() + branch);
    const signed char first = static_cast<signed char>(lam > slack(branch) ? 1 : 0);
    Fixing a = n.fix, b = n.fix;
    a[static_cast<std::size_t>(branch)] = static_cast<signed char>(1 - first);
    b[static_cast<std::size_t>(branch)] = first;
    push({a, o.value, next_id++});
    push({b, o.value, next_id++});
  }
  return res;
}

SearchResult search(const BigMProgram& p, double beta, const ExactOptions& opt) {
  SearchStrategy s = opt.strategy;
  if (s == SearchStrategy::Auto) {
    s = p.L <= opt.enumerate_up_to ? SearchStrategy::Enumerate : SearchStrategy::BranchAndBound;
    if (s == SearchStrategy::Enumerate && std::isfinite(beta)) {
      // One relaxation LP/QP proves infeasibility for the whole tree.
      const NodeOutcome root = solve_node(p, build_node(p, Fixing(static_cast<std::size_t>(p.L), -1), beta));
      if (!root.feasible) {
        SearchResult none;
        none.nodes = 1;
        return none;
      }
    }
  }
  if (s == SearchStrategy::Enumerate) {
    require(p.L <= 30, "exact bilevel: too many binaries to enumerate");
    return enumerate(p, beta, opt.jobs);
  }
  return branch_and_bound(p, beta);
}

struct Certified {
  Vec v;
  double ratio = 0.0;
};

// Among solutions of the winning pattern with the same aggregate, finds the one
// whose largest multiplier or slack is smallest. That value decides whether β
// could have cut off part of the feasible set.
Certified certify(const BigMProgram& p, const Fixing& fix, double beta, const Vec& leaf) {
  const NodeProblem node = build_node(p, fix, beta);
  const Layout& lay = node.layout;
  const int dim = lay.dim() + 1;
  const int t = lay.dim();
  LpProblem lp;
  lp.c = Vec::Zero(dim);
  lp.c(t) = 1.0;
  RowBuilder in(dim);
  for (Eigen::Index r = 0; r < node.qp.A_in.rows(); ++r) {
    in.add(node.qp.b_in(r)).head(lay.dim()) = node.qp.A_in.row(r);
  }
  for (int k = 0; k < p.L; ++k) {
    if (fix[static_cast<std::size_t>(k)] == 1) {
      auto a = in.add(0.0);
      a(lay.lam0() + k) = 1.0;
      a(t) = -1.0;
    } else {
      auto a = in.add(-p.h_bar(k));
      a.head(lay.nx) = -p.G_bar.row(k);
      a(t) = -1.0;
    }
  }
  if (p.mode == BilevelMode::Miqp) {
    const Vec agg = p.Lambda * leaf.head(lay.nx);
    for (int j = 0; j < lay.M; ++j) {
      const double band = 1e-8 * (1.0 + std::abs(agg(j)));
      in.add(agg(j) + band).head(lay.nx) = p.Lambda.row(j);
      in.add(-agg(j) + band).head(lay.nx) = -p.Lambda.row(j);
    }
  }
  in.into(lp.A_ub, lp.b_ub);
  lp.A_eq.setZero(node.qp.A_eq.rows(), dim);
  lp.A_eq.leftCols(lay.dim()) = node.qp.A_eq;
  lp.b_eq = node.qp.b_eq;
  const LpResult r = solve_lp(lp);
  Certified c;
  if (!r.optimal()) {
    // Fall back to the leaf point itself.
    c.v = leaf;
    double worst = 0.0;
    const Vec slack = p.h_bar - p.G_bar * leaf.head(lay.nx);
    for (int k = 0; k < p.L; ++k) {
      worst = std::max(worst, fix[static_cast<std::size_t>(k)] == 1 ? leaf(lay.lam0() + k) : slack(k));
    }
    c.ratio = worst / beta;
    return c;
  }
  c.v = r.x.head(lay.dim());
  c.ratio = std::max(0.0, r.x(t)) / beta;
  return c;
}

BilevelSolution finish(const BigMProgram& p, const Fixing& fix, const Certified& c, double value) {
  const int M = p.market.num_stations();
  const int N = p.market.num_companies();
  const Layout lay{N * M, p.L, N, M, 0};
  BilevelSolution s;
  s.status = p.mode == BilevelMode::Feasibility ? BilevelStatus::Feasible : BilevelStatus::Optimal;
  s.x_star = c.v.head(lay.nx);
  s.lambda_star = c.v.segment(lay.lam0(), p.L).cwiseMax(0.0);
  for (int k = 0; k < p.L; ++k) {
    if (fix[static_cast<std::size_t>(k)] == 0) s.lambda_star(k) = 0.0;
  }
  s.nu_star = c.v.segment(lay.nu0(), N);
  s.pi = c.v.segment(lay.pi0(), M);
  s.pattern.assign(fix.begin(), fix.end());
  s.objective = p.mode == BilevelMode::Feasibility ? 0.0 : value;
  s.margin_ratio = c.ratio;
  return s;
}

}  // namespace

const char* to_string(BilevelMode mode) {
  return mode == BilevelMode::Feasibility ? "feasibility" : "miqp";
}

const char* to_string(BilevelStatus status) {
  switch (status) {
    case BilevelStatus::Feasible: return "feasible";
    case BilevelStatus::Infeasible: return "infeasible";
    case BilevelStatus::Optimal: return "optimal";
  }
  return "unknown";
}

BigMProgram build_program(const MarketInstance& m, const DesiredDistribution& Z, double beta,
                          BilevelMode mode) {
  require(beta > 0.0, "build_program: beta must be positive");
  Z.validate();
  const int M = m.num_stations();
  const int N = m.num_companies();
  require(Z.z.size() == M, "build_program: Z has wrong length");
  BigMProgram p;
  p.market = m;
  p.Z = Z;
  p.mode = mode;
  p.beta = beta;
  const Mat C = m.stations().c.asDiagonal();
  const int nx = N * M;
  int L = 0;
  for (const Company& c : m.companies()) L += static_cast<int>(c.G.rows());
  p.L = L;

  p.P1 = Mat::Zero(nx, nx);
  p.P2 = Mat::Zero(nx, N);
  p.P3 = Mat::Zero(nx, L);
  p.r_bar.resize(nx);
  p.A_bar = Mat::Zero(N, nx);
  p.b_bar.resize(N);
  p.G_bar = Mat::Zero(L, nx);
  p.h_bar.resize(L);
  p.S_bar = Mat::Zero(nx, M);
  p.Lambda = Mat::Zero(M, nx);
  int row = 0;
  for (int i = 0; i < N; ++i) {
    const Company& c = m.company(i);
    const int k = static_cast<int>(c.G.rows());
    for (int j = 0; j < N; ++j) p.P1.block(i * M, j * M, M, M) = i == j ? Mat(2.0 * C) : C;
    p.P2.block(i * M, i, M, 1).setOnes();
    p.P3.block(i * M, row, M, k) = c.G.transpose();
    p.r_bar.segment(i * M, M) = m.r(i);
    p.A_bar.block(i, i * M, 1, M).setOnes();
    p.b_bar(i) = c.fleet;
    p.G_bar.block(row, i * M, k, M) = c.G;
    p.h_bar.segment(row, k) = c.h;
    p.S_bar.block(i * M, 0, M, M) = c.demand.asDiagonal();
    p.Lambda.block(0, i * M, M, M).setIdentity();
    row += k;
  }
  p.target = m.total_fleet() * Z.z;
  return p;
}

double stationarity_residual(const BigMProgram& p, const Vec& x, const Vec& lambda, const Vec& nu,
                             const PriceVector& pi) {
  const Vec r = p.P1 * x + p.P2 * nu + p.P3 * lambda + p.S_bar * pi + p.r_bar;
  return r.lpNorm<Eigen::Infinity>();
}

double initial_beta(const MarketInstance& m) {
  double h = 0.0, r = 0.0;
  for (int i = 0; i < m.num_companies(); ++i) {
    if (m.company(i).h.size() > 0) h = std::max(h, m.company(i).h.lpNorm<Eigen::Infinity>());
    r = std::max(r, m.r(i).lpNorm<Eigen::Infinity>());
  }
  const double game = m.total_fleet() * m.stations().c.maxCoeff() * (m.num_companies() + 1);
  return 10.0 * std::max({h, game, r});
}

namespace {

BilevelSolution solve_with_recalibration(BigMProgram p, const ExactOptions& opt) {
  std::vector<BetaAttempt> trail;
  for (int doubling = 0;; ++doubling) {
    const SearchResult res = search(p, p.beta, opt);
    long nodes = res.nodes, leaves = res.leaves;
    std::string outcome;
    if (res.found) {
      const NodeOutcome leaf = evaluate_leaf(p, res.fixing, p.beta);
      const Certified c = certify(p, res.fixing, p.beta, leaf.v);
      if (c.ratio < 1.0 - opt.margin) {
        trail.push_back({p.beta, "accepted"});
        BilevelSolution s = finish(p, res.fixing, c, res.value);
        s.beta_used = p.beta;
        s.beta_trail = trail;
        s.nodes = nodes;
        s.leaves = leaves;
        return s;
      }
      outcome = "margin";
    } else {
      // Without big-M bounds the complementarity search is exact. If it is
      // also empty the instance is infeasible for every β.
      const SearchResult open = search(p, kInf, opt);
      nodes += open.nodes;
      leaves += open.leaves;
      if (!open.found) {
        trail.push_back({p.beta, "infeasible"});
        BilevelSolution s;
        s.status = BilevelStatus::Infeasible;
        s.beta_used = p.beta;
        s.beta_trail = trail;
        s.nodes = nodes;
        s.leaves = leaves;
        return s;
      }
      outcome = "cut_off";
    }
    trail.push_back({p.beta, outcome});
    if (!opt.recalibrate || doubling >= opt.max_doublings) {
      throw SolverFailure("big-M constant " + std::to_string(p.beta) +
                          " is too small for this instance; pass a larger --beta manually");
    }
    p.beta *= 2.0;
  }
}

}  // namespace

BilevelSolution solve_feasibility(const BigMProgram& prog, const ExactOptions& opt) {
  require(prog.mode == BilevelMode::Feasibility, "solve_feasibility: program built in miqp mode");
  return solve_with_recalibration(prog, opt);
}

BilevelSolution solve_miqp(const BigMProgram& prog, const ExactOptions& opt) {
  require(prog.mode == BilevelMode::Miqp, "solve_miqp: program built in feasibility mode");
  return solve_with_recalibration(prog, opt);
}

BetaCalibration calibrate_beta(const MarketInstance& m, const DesiredDistribution& Z,
                               BilevelMode mode, const ExactOptions& opt,
                               std::optional<double> beta0) {
  const BigMProgram p = build_program(m, Z, beta0.value_or(initial_beta(m)), mode);
  ExactOptions o = opt;
  o.recalibrate = true;
  BetaCalibration out;
  out.solution = solve_with_recalibration(p, o);
  out.beta = out.solution.beta_used;
  return out;
}

std::optional<double> enumerate_objective(const BigMProgram& prog, int jobs) {
  const SearchResult r = enumerate(prog, prog.beta, jobs);
  if (!r.found) return std::nullopt;
  return r.value;
}

}  // namespace stackprice
