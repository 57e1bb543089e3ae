#include <benchmark/benchmark.h>

#include <random>

#include "geb/ndops/ops.hpp"

using namespace geb::nd;

namespace {

TensorF random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> n(0.0f, 1.0f);
    TensorF t({r, c});
    for (auto& v : t.data()) v = n(rng);
    return t;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const TensorF a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(32, 256);

static void BM_MatmulTransposedB(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const TensorF a = random_matrix(n, n, 3), b = random_matrix(n, n, 4);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b, Trans::No, Trans::Yes));
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}
BENCHMARK(BM_MatmulTransposedB)->RangeMultiplier(2)->Range(32, 256);

static void BM_SoftmaxRows(benchmark::State& state) {
    const TensorF x = random_matrix(64, static_cast<std::size_t>(state.range(0)), 5);
    for (auto _ : state) benchmark::DoNotOptimize(softmax(x, 1));
}
BENCHMARK(BM_SoftmaxRows)->Arg(512)->Arg(4096);

BENCHMARK_MAIN();
