#include "stackprice/bilevel.hpp"
#include "stackprice/equilibrium.hpp"
#include "stackprice/exploration.hpp"
#include "stackprice/policy.hpp"
#include "stackprice/scenario.hpp"

#include <benchmark/benchmark.h>

using namespace stackprice;

namespace {

const GeneratedState& shenzhen_state() {
  static const GeneratedState g = generate_state(fixture("shenzhen-like"), 1);
  return g;
}

void BM_SolveVne(benchmark::State& state) {
  const GeneratedState& g = shenzhen_state();
  const Vec pi = (Vec(4) << 3.39, 2.20, 2.83, 1.58).finished();
  SolverConfig cfg;
  cfg.scheme = state.range(0) == 0 ? VeScheme::ProjectedGradient : VeScheme::Extragradient;
  for (auto _ : state) benchmark::DoNotOptimize(solve_vne(g.market, pi, cfg).x_star.data());
}
BENCHMARK(BM_SolveVne)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_InteriorKkt(benchmark::State& state) {
  const GeneratedState& g = shenzhen_state();
  const Vec pi = Vec::Constant(4, 2.0);
  for (auto _ : state) benchmark::DoNotOptimize(solve_interior_kkt(g.market, pi).x.data());
}
BENCHMARK(BM_InteriorKkt)->Unit(benchmark::kMicrosecond);

void BM_BoxSuperset(benchmark::State& state) {
  const GeneratedState& g = shenzhen_state();
  for (auto _ : state) benchmark::DoNotOptimize(box_superset(compute_bounds(g.market)).box.lo.data());
}
BENCHMARK(BM_BoxSuperset)->Unit(benchmark::kMicrosecond);

void BM_GenerateState(benchmark::State& state) {
  const ScenarioConfig sc = fixture("shenzhen-like");
  std::uint64_t t = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_state(sc, ++t).s.data());
}
BENCHMARK(BM_GenerateState)->Unit(benchmark::kMicrosecond);

PolicyParams bench_policy() { return init_policy(fixture("shenzhen-like").policy_config(), 1); }

void BM_PolicyForward(benchmark::State& state) {
  const PolicyParams p = bench_policy();
  const Vec s = shenzhen_state().s;
  for (auto _ : state) benchmark::DoNotOptimize(forward(p, s).mu.data());
}
BENCHMARK(BM_PolicyForward)->Unit(benchmark::kMicrosecond);

// Forward and backward pass over a batch of the given size.
void BM_PolicyBatchGradient(benchmark::State& state) {
  const PolicyParams p = bench_policy();
  const auto B = state.range(0);
  const Mat S = shenzhen_state().s.replicate(1, B);
  const Mat Pi = Mat::Constant(4, B, 2.5);
  const Vec w = Vec::Constant(B, 0.9);
  Vec g;
  for (auto _ : state) {
    benchmark::DoNotOptimize(weighted_log_likelihood(p, S, Pi, w, &g));
    benchmark::DoNotOptimize(g.data());
  }
  state.SetItemsProcessed(state.iterations() * B);
}
BENCHMARK(BM_PolicyBatchGradient)->Arg(1)->Arg(32)->Unit(benchmark::kMicrosecond);

void BM_MiqpSmall(benchmark::State& state) {
  ScenarioConfig sc = fixture("desk");
  sc.cap_fraction = (Vec(2) << 0.45, 0.7).finished();
  const GeneratedState g = generate_state(sc, 1);
  const DesiredDistribution Z{(Vec(2) << 0.7, 0.3).finished()};
  const BigMProgram prog = build_program(g.market, Z, initial_beta(g.market), BilevelMode::Miqp);
  ExactOptions opt;
  opt.strategy = state.range(0) == 0 ? SearchStrategy::Enumerate : SearchStrategy::BranchAndBound;
  for (auto _ : state) benchmark::DoNotOptimize(solve_miqp(prog, opt).objective);
}
BENCHMARK(BM_MiqpSmall)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
