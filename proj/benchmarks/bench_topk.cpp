#include <benchmark/benchmark.h>

#include <cstdlib>

#include "bench_common.hpp"
#include "embedkit/simsearch.hpp"

namespace {

void BM_TopK(benchmark::State& state) {
    const std::size_t corpus_size = static_cast<std::size_t>(state.range(0));
    const std::size_t dims = static_cast<std::size_t>(state.range(1));
    const std::size_t k = static_cast<std::size_t>(state.range(2));
    const auto corpus = benchutil::unit_matrix(1, corpus_size, dims, "d");
    const auto queries = benchutil::unit_matrix(2, 16, dims, "q");

    for (auto _ : state) {
        auto runs = embedkit::top_k(queries, corpus, k);
        benchmark::DoNotOptimize(runs);
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * 16 * corpus_size);
}

void BM_TopK_Workers(benchmark::State& state) {
    static const auto corpus = benchutil::unit_matrix(1, 200000, 64, "d");
    static const auto queries = benchutil::unit_matrix(2, 32, 64, "q");
    setenv("EMBEDKIT_WORKERS", std::to_string(state.range(0)).c_str(), 1);

    for (auto _ : state) {
        auto runs = embedkit::top_k(queries, corpus, 100);
        benchmark::DoNotOptimize(runs);
    }
    unsetenv("EMBEDKIT_WORKERS");
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * 32 * 200000);
}

}  // namespace

BENCHMARK(BM_TopK)
    ->Args({10000, 64, 10})
    ->Args({100000, 64, 10})
    ->Args({100000, 64, 100})
    ->Args({100000, 256, 100})
    ->Unit(benchmark::kMillisecond);

BENCHMARK(BM_TopK_Workers)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
