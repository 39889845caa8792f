#include <benchmark/benchmark.h>

#include "lobdiff/data/synth_market.hpp"
#include "lobdiff/eval/metrics.hpp"
#include "lobdiff/forecast/forecast.hpp"
#include "lobdiff/network/score_network.hpp"
#include "lobdiff/sampling/sampler.hpp"

using namespace lobdiff;

namespace {

Window noise(Rng& rng, int rows, int cols) {
  Window w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  return w;
}

ConditioningContext context(Rng& rng) {
  ConditioningContext c;
  c.past = noise(rng, kWindowLength, kLevels).cwiseAbs();
  c.tau.assign(kWindowLength, 0.5);
  c.lam = std::vector<double>(kWindowLength, 1.0);
  return c;
}

const SnapshotSeries& desk_day() {
  static const SnapshotSeries s = synth_market(SynthMarketConfig::desk(5, "day0"));
  return s;
}

void BM_EpsPredict(benchmark::State& state) {
  const auto params = init_parameters(NetworkConfig::desk(true), 1);
  Rng rng(2);
  const Window x = noise(rng, kWindowLength, kLevels);
  const auto ctx = context(rng);
  const auto precision = state.range(0) ? Precision::kExact : Precision::kFast;
  for (auto _ : state) benchmark::DoNotOptimize(eps_predict(params, x, 100, ctx, precision));
}
BENCHMARK(BM_EpsPredict)->Arg(0)->Arg(1)->ArgName("exact")->Unit(benchmark::kMillisecond);

void BM_Gradient(benchmark::State& state) {
  const auto params = init_parameters(NetworkConfig::desk(true), 1);
  Rng rng(3);
  const Window x = noise(rng, kWindowLength, kLevels);
  const Window target = noise(rng, kWindowLength, kLevels);
  const auto ctx = context(rng);
  std::vector<double> grad(params.size());
  for (auto _ : state) {
    benchmark::DoNotOptimize(squared_error_gradient(params, x, 100, ctx, target, 1.0, grad));
  }
}
BENCHMARK(BM_Gradient)->Unit(benchmark::kMillisecond);

void BM_AncestralSample(benchmark::State& state) {
  const auto params = init_parameters(NetworkConfig::desk(true), 1);
  const auto schedule = desk_schedule();
  Rng rng(4);
  const auto ctx = context(rng);
  SamplerConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ancestral_sample(params, schedule, ctx, cfg));
    ++cfg.seed;
  }
}
BENCHMARK(BM_AncestralSample)->Unit(benchmark::kMillisecond)->Iterations(3);

void BM_MarginalDistances(benchmark::State& state) {
  const Window m = series_matrix(desk_day());
  const auto pools = pool_levels(std::span(&m, 1));
  for (auto _ : state) benchmark::DoNotOptimize(marginal_distances(pools, pools));
}
BENCHMARK(BM_MarginalDistances)->Unit(benchmark::kMillisecond);

void BM_Acf(benchmark::State& state) {
  const Window m = series_matrix(desk_day());
  for (auto _ : state) benchmark::DoNotOptimize(acf(m, 4, 100));
}
BENCHMARK(BM_Acf)->Unit(benchmark::kMillisecond);

void BM_GbdtTrain(benchmark::State& state) {
  const auto samples = build_targets(desk_day(), kForecastHistory, 10, 2);
  GbdtConfig cfg;
  cfg.n_trees = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(train_forecaster(samples, cfg));
  state.counters["samples"] = static_cast<double>(samples.size());
}
BENCHMARK(BM_GbdtTrain)->Arg(20)->Unit(benchmark::kMillisecond)->Iterations(1);

}  // namespace

BENCHMARK_MAIN();
