#include <benchmark/benchmark.h>

#include "gradcheck.hpp"
#include "sapa/model.hpp"

using namespace sapa;

namespace {

// Default-sized model (d_model 32, 4 heads) on 64-dimensional inputs.
ModelConfig bench_config() {
  ModelConfig c;
  c.d_c = 64;
  c.d_s = 64;
  return c;
}

void BM_Forward(benchmark::State& state) {
  const auto cfg = bench_config();
  std::mt19937_64 rng(1);
  const auto params = ModelParams::init(cfg, 1);
  const auto batch = gradcheck::random_batch(cfg, static_cast<std::size_t>(state.range(0)), 0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(forward(params, batch));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(64);

void BM_Backward(benchmark::State& state) {
  const auto cfg = bench_config();
  std::mt19937_64 rng(2);
  const auto params = ModelParams::init(cfg, 2);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto batch = gradcheck::random_batch(cfg, n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(backward(params, batch));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Backward)->Arg(16)->Arg(64);

}  // namespace
