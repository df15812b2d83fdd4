#include <benchmark/benchmark.h>

#include <random>

#include "fps/autograd.hpp"
#include "fps/harness/ingest.hpp"
#include "fps/model.hpp"
#include "fps/ops.hpp"
#include "fps/selector.hpp"

namespace {

fps::Dataset transformer_data(std::size_t n) {
  return fps::harness::make_gaussian_classes(n, 8 * 64, 4, 2.0, 11);
}

void BM_FpsSelectTransformer(benchmark::State& state) {
  fps::Model model = fps::build_mini_transformer(64, 256, 4, 8, 3);
  const fps::Dataset data = transformer_data(static_cast<std::size_t>(state.range(0)));
  const auto budget = fps::BudgetSpec::fraction(0.05);
  for (auto _ : state) {
    auto mask = fps::select_fps(model, data, budget);
    benchmark::DoNotOptimize(mask.addresses.data());
  }
}
BENCHMARK(BM_FpsSelectTransformer)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_GpsSelectTransformer(benchmark::State& state) {
  fps::Model model = fps::build_mini_transformer(64, 256, 4, 8, 3);
  const fps::Dataset data = transformer_data(static_cast<std::size_t>(state.range(0)));
  const auto budget = fps::BudgetSpec::fraction(0.05);
  for (auto _ : state) {
    auto scores = fps::score_gps(model, data);
    auto mask = fps::select(scores, budget, fps::Scheme::kNeuronLevel);
    benchmark::DoNotOptimize(mask.addresses.data());
  }
}
BENCHMARK(BM_GpsSelectTransformer)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  std::vector<double> a(n * n), b(n * n);
  for (double& v : a) v = normal(rng);
  for (double& v : b) v = normal(rng);
  const auto ta = fps::Tensor::from_vector({n, n}, a);
  const auto tb = fps::Tensor::from_vector({n, n}, b);
  fps::NoGradGuard no_grad;
  for (auto _ : state) {
    auto c = fps::matmul(ta, tb);
    benchmark::DoNotOptimize(c.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
