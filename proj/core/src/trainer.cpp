#include "stackprice/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <sstream>

namespace stackprice {

namespace {

// Scenario stream offsets keep training, normalization and evaluation states apart.
constexpr std::uint64_t kNormalizationOffset = 1ULL << 40;
constexpr std::uint64_t kEvaluationOffset = 1ULL << 41;

void set_normalization(PolicyParams& p, const ScenarioConfig& sc, std::uint64_t seed, int count) {
  const int n = sc.num_companies * sc.num_stations * 2;
  Mat states(n, count);
  for (int k = 0; k < count; ++k) {
    states.col(k) = generate_state(sc, kNormalizationOffset + static_cast<std::uint64_t>(k), seed).s;
  }
  const Vec mean = states.rowwise().mean();
  const Vec var = (states.colwise() - mean).array().square().rowwise().mean();
  p.input_shift = mean;
  p.input_scale = var.unaryExpr([](double v) { return v > 1e-24 ? 1.0 / std::sqrt(v) : 1.0; });
}

}  // namespace

const char* to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "ascent"; }

const char* to_string(ExploreSpace space) { return space == ExploreSpace::Relaxed ? "theorem1" : "box"; }

void TrainConfig::validate() const {
  require(n_iter >= 0 && n_explore >= 0 && n_explore <= n_iter, "train: need 0 <= n_explore <= n_iter");
  require(batch >= 1, "train: batch must be at least 1");
  require(epochs >= 0, "train: epochs must be nonnegative");
  require(lr > 0.0, "train: learning rate must be positive");
  require(normalization_states >= 1, "train: normalization_states must be positive");
}

void Buffer::push(Transition t) {
  require(t.reward >= 0.0 && t.reward <= 1.0, "buffer: reward outside [0,1]");
  items_.push_back(std::move(t));
  if (capacity_ && items_.size() > *capacity_) items_.erase(items_.begin());
}

std::vector<const Transition*> Buffer::sample(std::size_t count, std::mt19937_64& rng) const {
  require(count <= items_.size(), "buffer: batch larger than buffer");
  // Partial Fisher-Yates over indices.
  std::vector<std::size_t> idx(items_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<const Transition*> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, idx.size() - 1);
    std::swap(idx[k], idx[pick(rng)]);
    out.push_back(&items_[idx[k]]);
  }
  return out;
}

EnvironmentStep environment_step(const MarketInstance& m, const PriceVector& pi,
                                 const DesiredDistribution& Z, const SolverConfig& ne) {
  EnvironmentStep out;
  out.equilibrium = solve_vne(m, pi, ne);
  out.x_hat = m.aggregate(out.equilibrium.x_star) / m.total_fleet();
  out.reward = reward(out.equilibrium.x_star, m.fleets(), Z);
  return out;
}

PolicyParams update_step(const PolicyParams& params, const std::vector<const Transition*>& batch,
                         double lr, int epochs, OptimizerKind kind, AdamState* adam,
                         UpdateStats* stats) {
  require(!batch.empty(), "update_step: empty batch");
  require(kind != OptimizerKind::Adam || adam != nullptr, "update_step: Adam needs a state");
  const int M = params.config.num_stations;
  const auto B = static_cast<Eigen::Index>(batch.size());
  Mat states(params.config.state_size(), B);
  Mat prices(M, B);
  Vec weights(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    states.col(b) = batch[static_cast<std::size_t>(b)]->s;
    prices.col(b) = batch[static_cast<std::size_t>(b)]->pi;
    weights(b) = batch[static_cast<std::size_t>(b)]->reward;
  }

  PolicyParams p = params;
  Vec theta = p.to_flat();
  if (kind == OptimizerKind::Adam && adam->m.size() != theta.size()) {
    adam->m = Vec::Zero(theta.size());
    adam->v = Vec::Zero(theta.size());
    adam->t = 0;
  }
  Vec grad;
  for (int e = 0; e < epochs; ++e) {
    const double obj = weighted_log_likelihood(p, states, prices, weights, &grad);
    if (stats) stats->objective.push_back(obj);
    if (!grad.allFinite() || !std::isfinite(obj)) {
      std::ostringstream msg;
      msg << "update_step: non-finite gradient at epoch " << e << " (objective " << obj
          << ", batch " << B << ")";
      throw SolverFailure(msg.str());
    }
    if (kind == OptimizerKind::Ascent) {
      theta += lr * grad;
    } else {
      constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      ++adam->t;
      adam->m = b1 * adam->m + (1.0 - b1) * grad;
      adam->v = b2 * adam->v + (1.0 - b2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam->t));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam->t));
      theta.array() += lr * (adam->m.array() / c1) / ((adam->v.array() / c2).sqrt() + eps);
    }
    p.from_flat(theta);
  }
  if (stats) stats->objective.push_back(weighted_log_likelihood(p, states, prices, weights));
  return p;
}

PriceBox exploration_box(const ScenarioConfig& sc, const MarketInstance& m, ExploreSpace space) {
  PriceBox ambient = uniform_box(sc.num_stations, sc.price_lo, sc.price_hi);
  if (space == ExploreSpace::Box) return ambient;
  const BoxSuperset sup = box_superset(compute_bounds(m));
  PriceBox box = sup.box;
  for (int j : sup.unbounded_coordinates) {
    box.lo(j) = ambient.lo(j);
    box.hi(j) = ambient.hi(j);
  }
  return box;
}

std::uint64_t state_stream_seed(const ScenarioConfig& sc, const TrainConfig& cfg) {
  std::seed_seq seq{static_cast<std::uint32_t>(sc.seed), static_cast<std::uint32_t>(sc.seed >> 32),
                    static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

TrainingResult run_training(const ScenarioConfig& sc, const TrainConfig& cfg) {
  sc.validate();
  cfg.validate();
  const DesiredDistribution Z = sc.desired();
  const std::uint64_t stream = state_stream_seed(sc, cfg);
  std::mt19937_64 rng(cfg.seed);

  TrainingResult result;
  result.params = init_policy(sc.policy_config(), cfg.seed);
  if (cfg.normalize_inputs) set_normalization(result.params, sc, stream, cfg.normalization_states);

  Buffer buffer;
  AdamState adam;
  std::deque<double> window;
  for (int t = 1; t <= cfg.n_iter; ++t) {
    const GeneratedState gs = generate_state(sc, static_cast<std::uint64_t>(t), stream);
    const bool exploring = t <= cfg.n_explore;
    PriceVector pi;
    if (exploring) {
      pi = sample_uniform(exploration_box(sc, gs.market, cfg.explore), rng);
    } else {
      if (buffer.size() > 0) {
        const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch), buffer.size());
        result.params = update_step(result.params, buffer.sample(n, rng), cfg.lr, cfg.epochs,
                                    cfg.optimizer, &adam);
      }
      pi = sample(result.params, gs.s, rng);
    }
    const EnvironmentStep step = environment_step(gs.market, pi, Z);
    buffer.push({gs.s, pi, step.reward});

    window.push_back(step.reward);
    if (window.size() > 100) window.pop_front();
    // Summed afresh so the value does not carry running round-off.
    double ma = 0.0;
    for (double r : window) ma += r;
    result.log.push_back({t, step.reward, ma / static_cast<double>(window.size()), pi, step.x_hat,
                          exploring ? "explore" : "policy"});
  }
  return result;
}

Evaluation evaluate(const PolicyParams& params, const ScenarioConfig& sc, int n_states,
                    std::uint64_t seed) {
  require(n_states >= 1, "evaluate: need at least one state");
  const DesiredDistribution Z = sc.desired();
  Evaluation ev;
  double total = 0.0;
  for (int k = 0; k < n_states; ++k) {
    const GeneratedState gs = generate_state(sc, kEvaluationOffset + static_cast<std::uint64_t>(k), seed);
    const PriceVector pi = forward(params, gs.s).mu;
    const EnvironmentStep step = environment_step(gs.market, pi, Z);
    ev.rows.push_back({k, step.reward, pi, step.x_hat, Z.z - step.x_hat});
    total += step.reward;
  }
  ev.mean_reward = total / n_states;
  return ev;
}

}  // namespace stackprice
