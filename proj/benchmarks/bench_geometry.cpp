#include <benchmark/benchmark.h>

#include "bench_common.hpp"
#include "embedkit/geometry.hpp"

namespace {

void BM_UniformityFullBatch(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const auto points = benchutil::unit_matrix(1, n, 64, "p");
    for (auto _ : state) {
        const double u = embedkit::uniformity(points, 2.0, n + 1, 0);
        benchmark::DoNotOptimize(u);
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * n * (n - 1));
}

void BM_UniformityBatched(benchmark::State& state) {
    const std::size_t batch = static_cast<std::size_t>(state.range(0));
    const auto points = benchutil::unit_matrix(1, 300000, 64, "p");
    for (auto _ : state) {
        const double u = embedkit::uniformity(points, 2.0, batch, 0);
        benchmark::DoNotOptimize(u);
    }
}

void BM_Alignment(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const auto a = benchutil::unit_matrix(1, n, 64, "a");
    const auto b = benchutil::unit_matrix(2, n, 64, "b");
    std::vector<embedkit::RowPair> pairs;
    pairs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(a.row(i), b.row(i));
    for (auto _ : state) {
        const double v = embedkit::alignment(pairs, 2.0);
        benchmark::DoNotOptimize(v);
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * n);
}

}  // namespace

BENCHMARK(BM_UniformityFullBatch)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_UniformityBatched)->Arg(1024)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Alignment)->Arg(10000)->Arg(300000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
