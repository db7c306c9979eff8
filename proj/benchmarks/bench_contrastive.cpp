#include <benchmark/benchmark.h>

#include "bench_common.hpp"
#include "embedkit/contrastive.hpp"

namespace {

void BM_ContrastiveLoss(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const std::size_t d = static_cast<std::size_t>(state.range(1));
    const auto a = benchutil::unit_matrix(1, n, d, "a");
    const auto p = benchutil::unit_matrix(2, n, d, "p");
    const auto h = benchutil::unit_matrix(3, n, d, "h");

    for (auto _ : state) {
        auto loss = embedkit::contrastive_loss(a, p, &h, 0.05);
        benchmark::DoNotOptimize(loss);
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * n * n);
}

void BM_ContrastiveGrad(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const std::size_t d = static_cast<std::size_t>(state.range(1));
    const auto a = benchutil::unit_matrix(1, n, d, "a");
    const auto p = benchutil::unit_matrix(2, n, d, "p");
    const auto h = benchutil::unit_matrix(3, n, d, "h");
    const auto head = embedkit::ProjectionHead::identity(d);

    for (auto _ : state) {
        auto result = embedkit::contrastive_loss_and_grad(a, p, &h, 0.05, head);
        benchmark::DoNotOptimize(result);
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * n * n);
}

}  // namespace

BENCHMARK(BM_ContrastiveLoss)
    ->Args({128, 64})
    ->Args({512, 64})
    ->Args({1024, 128})
    ->Unit(benchmark::kMillisecond);

BENCHMARK(BM_ContrastiveGrad)
    ->Args({128, 64})
    ->Args({512, 64})
    ->Args({1024, 128})
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
