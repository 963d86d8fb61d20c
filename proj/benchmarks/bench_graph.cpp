#include <benchmark/benchmark.h>

#include <random>

#include "sapa/anchors.hpp"
#include "sapa/simgraph.hpp"
#include "sapa/synthetic.hpp"

using namespace sapa;

namespace {

SpeakerGraph random_graph(std::size_t n, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (u(rng) < density) edges.push_back({i, j, 0.05 + u(rng)});
    }
  }
  return SpeakerGraph::from_edges(n, std::move(edges));
}

void BM_Modularity(benchmark::State& state) {
  const auto g = random_graph(static_cast<std::size_t>(state.range(0)), 0.3, 1);
  const auto p = louvain(g, 1);
  for (auto _ : state) benchmark::DoNotOptimize(modularity(g, p));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(g.edges.size()));
}
BENCHMARK(BM_Modularity)->Arg(24)->Arg(96)->Arg(384);

void BM_Louvain(benchmark::State& state) {
  const auto g = random_graph(static_cast<std::size_t>(state.range(0)), 0.3, 2);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(louvain(g, ++seed));
}
BENCHMARK(BM_Louvain)->Arg(24)->Arg(96)->Arg(384)->Unit(benchmark::kMillisecond);

void BM_ClusterAllEmotions(benchmark::State& state) {
  SyntheticSpec spec;
  spec.speakers_per_corpus = static_cast<std::size_t>(state.range(0));
  const auto data = generate_synthetic(spec);
  for (auto _ : state) benchmark::DoNotOptimize(cluster_all_emotions(data.dataset.records, 1));
}
BENCHMARK(BM_ClusterAllEmotions)->Arg(12)->Arg(48)->Unit(benchmark::kMillisecond);

void BM_PhonemeSimilarity(benchmark::State& state) {
  SyntheticSpec spec;
  const auto data = generate_synthetic(spec);
  const auto& inv = data.dataset.manifest.phoneme_inventory;
  for (auto _ : state) {
    benchmark::DoNotOptimize(phoneme_similarity(data.dataset.records, "src", "tgt", inv));
  }
}
BENCHMARK(BM_PhonemeSimilarity)->Unit(benchmark::kMillisecond);

}  // namespace
