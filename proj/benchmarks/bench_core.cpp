#include <benchmark/benchmark.h>

#include "belieffit/filters.hpp"
#include "belieffit/rng.hpp"
#include "belieffit/sim.hpp"
#include "belieffit/training.hpp"

using namespace belieffit;

static void BM_KalmanUpdate(benchmark::State& state) {
  GaussianBelief2 belief = init_position_belief(Vec2(0.1, 0.2), 0.01);
  const PositionNoiseModel noise{1e-4 * Mat2::Identity()};
  const Innovation v{Vec2(1e-3, -2e-3)};
  for (auto _ : state) {
    benchmark::DoNotOptimize(belief = kalman_update(belief, v, noise));
    belief.cov = 1e-4 * Mat2::Identity();
  }
}
BENCHMARK(BM_KalmanUpdate);

static void BM_HistogramUpdate(benchmark::State& state) {
  const int n_types = static_cast<int>(state.range(0));
  const TypeBelief prior = init_type_belief_uniform(n_types);
  const MatchObservationModel model(0.85, 0.15);
  for (auto _ : state)
    benchmark::DoNotOptimize(histogram_update(prior, MatchObs::Mismatch, false, PegType{1}, 0.34, model));
}
BENCHMARK(BM_HistogramUpdate)->Arg(3)->Arg(10)->Arg(100);

static void BM_RolloutLowLevel(benchmark::State& state) {
  Rng rng = make_rng(1, Stream::World, 0);
  const World world = spawn_world(EnvConfig{}, SpiralParams{}, rng);
  const auto& hole = world.holes.front();
  const PegType peg{hole.hole_type};
  for (auto _ : state) benchmark::DoNotOptimize(rollout_low_level(world, hole.position, peg, hole, rng));
}
BENCHMARK(BM_RolloutLowLevel);

static void BM_GradNll(benchmark::State& state) {
  const auto data = generate_dataset(EnvConfig{}, SpiralParams{}, SensorModel{},
                                     static_cast<int>(state.range(0)), 5);
  const LearnedParams params;
  for (auto _ : state) benchmark::DoNotOptimize(grad_nll(params, data, 0.34));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GradNll)->Arg(64)->Arg(3000);
BENCHMARK_MAIN();
