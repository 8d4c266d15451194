#include <benchmark/benchmark.h>

#include <vector>

#include "adaptrate/bayes.hpp"
#include "adaptrate/design.hpp"

using namespace adaptrate;

namespace {

void BM_TransitionRow(benchmark::State& state, ChainModel model, RateVector h) {
  std::vector<double> row(model.num_states());
  double dt = 0.1;
  for (auto _ : state) {
    transition_row(model, h.span(), 0, dt, row);
    benchmark::DoNotOptimize(row.data());
    dt = dt < 5.0 ? dt * 1.1 : 0.1;
  }
}
BENCHMARK_CAPTURE(BM_TransitionRow, bidirectional, ChainModel::two_state_bidirectional(), RateVector{1.0, 2.0});
BENCHMARK_CAPTURE(BM_TransitionRow, ring8, ChainModel::ring(8), RateVector{1.0, 0.5});
BENCHMARK_CAPTURE(BM_TransitionRow, mm1, ChainModel::mm1_queue(), RateVector{0.5, 1.0});

void BM_Objective1D(benchmark::State& state) {
  const Posterior post = initial_posterior(GammaPrior{}, GridSpec{10.0, static_cast<std::size_t>(state.range(0))});
  const ChainModel model = ChainModel::two_state_unidirectional();
  const DesignConfig config;
  for (auto _ : state) benchmark::DoNotOptimize(objective(post, model, 0, 0.7, config));
}
BENCHMARK(BM_Objective1D)->Arg(101)->Arg(201)->Arg(401);

void BM_Objective2D(benchmark::State& state) {
  const Posterior post = initial_posterior(BivariateGammaPrior{}, GridSpec{10.0, static_cast<std::size_t>(state.range(0))});
  const ChainModel model = ChainModel::two_state_bidirectional();
  const DesignConfig config;
  for (auto _ : state) benchmark::DoNotOptimize(objective(post, model, 0, 0.7, config));
}
BENCHMARK(BM_Objective2D)->Arg(21)->Arg(41)->Arg(81);

void BM_ChooseNextTime(benchmark::State& state) {
  const Posterior post = initial_posterior(BivariateGammaPrior{}, GridSpec{10.0, 41});
  const ChainModel model = ChainModel::two_state_bidirectional();
  const DesignConfig config;
  for (auto _ : state) benchmark::DoNotOptimize(choose_next_time(post, model, 0, config));
}
BENCHMARK(BM_ChooseNextTime);

void BM_BayesUpdate(benchmark::State& state) {
  const Posterior post = initial_posterior(BivariateGammaPrior{}, GridSpec{10.0, 41});
  const ChainModel model = ChainModel::ring(6);
  for (auto _ : state) benchmark::DoNotOptimize(bayes_update(post, model, Observation{0.0, 0}, Observation{0.4, 2}));
}
BENCHMARK(BM_BayesUpdate);

}  // namespace

BENCHMARK_MAIN();
