#pragma once

#include "stackprice/equilibrium.hpp"
#include "stackprice/exploration.hpp"
#include "stackprice/policy.hpp"
#include "stackprice/scenario.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace stackprice {

struct Transition {
  MarketState s;
  PriceVector pi;
  double reward = 0.0;
};

/// Ordered store of observed triplets. Unbounded unless a capacity is set, in
/// which case the oldest entries are dropped.
class Buffer {
 public:
  explicit Buffer(std::optional<std::size_t> capacity = std::nullopt) : capacity_(capacity) {}

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  const Transition& operator[](std::size_t k) const { return items_[k]; }

  /// `count` distinct entries drawn uniformly (count ≤ size()).
  std::vector<const Transition*> sample(std::size_t count, std::mt19937_64& rng) const;

 private:
  std::optional<std::size_t> capacity_;
  std::vector<Transition> items_;
};

enum class OptimizerKind { Ascent, Adam };
enum class ExploreSpace { Box, Relaxed };

const char* to_string(OptimizerKind kind);
const char* to_string(ExploreSpace space);

struct TrainConfig {
  int n_iter = 1000;
  int n_explore = 250;
  int batch = 32;
  int epochs = 20;
  double lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Ascent;
  std::uint64_t seed = 0;
  ExploreSpace explore = ExploreSpace::Box;
  /// Standardize policy inputs with statistics of held-out states.
  bool normalize_inputs = true;
  int normalization_states = 64;

  void validate() const;
};

struct EnvironmentStep {
  Vec x_hat;
  double reward = 0.0;
  EquilibriumResult equilibrium;
};

/// Equilibrium at π, normalized aggregate and reward. Solver failures propagate.
EnvironmentStep environment_step(const MarketInstance& m, const PriceVector& pi,
                                 const DesiredDistribution& Z, const SolverConfig& ne = {});

struct AdamState {
  Vec m;
  Vec v;
  long t = 0;
};

struct UpdateStats {
  /// Batch objective before each epoch, plus the value after the last one.
  std::vector<double> objective;
};

/// `epochs` full-batch ascent steps on Σ_k R_k·log ρ(π_k | s_k). `adam` is
/// required for OptimizerKind::Adam and carries its moments across calls.
PolicyParams update_step(const PolicyParams& params, const std::vector<const Transition*>& batch,
                         double lr, int epochs, OptimizerKind kind = OptimizerKind::Ascent,
                         AdamState* adam = nullptr, UpdateStats* stats = nullptr);

struct LogRow {
  int iter = 0;
  double reward = 0.0;
  double ma100 = 0.0;
  PriceVector price;
  Vec x_hat;
  std::string phase;  ///< "explore" or "policy"
};

struct TrainingResult {
  std::vector<LogRow> log;
  PolicyParams params;
};

/// Exploration box for one state: the configured price box, or the relaxed-polytope
/// LP box with unbounded coordinates taken from the configured box.
PriceBox exploration_box(const ScenarioConfig& sc, const MarketInstance& m, ExploreSpace space);

/// Seed of the scenario stream used by a training run.
std::uint64_t state_stream_seed(const ScenarioConfig& sc, const TrainConfig& cfg);

TrainingResult run_training(const ScenarioConfig& sc, const TrainConfig& cfg);

struct EvaluationRow {
  int index = 0;
  double reward = 0.0;
  PriceVector price;
  Vec x_hat;
  Vec gap;  ///< Z − x̂
};

struct Evaluation {
  std::vector<EvaluationRow> rows;
  double mean_reward = 0.0;
};

/// Deterministic π = μ(s) on `n_states` held-out states of the scenario.
Evaluation evaluate(const PolicyParams& params, const ScenarioConfig& sc, int n_states,
                    std::uint64_t seed);

}  // namespace stackprice
