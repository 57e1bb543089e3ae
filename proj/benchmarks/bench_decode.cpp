#include <benchmark/benchmark.h>

#include "geb/infer/engine.hpp"
#include "geb/model/params.hpp"

using namespace geb;

namespace {

// range(0) is kv_groups; 16 groups is the multi-head baseline.
model::ModelConfig bench_config(std::size_t kv_groups) {
    model::ModelConfig cfg;
    cfg.vocab_size = 512;
    cfg.hidden_size = 256;
    cfg.ffn_size = 768;
    cfg.n_heads = 16;
    cfg.kv_groups = kv_groups;
    cfg.n_layers = 2;
    cfg.max_seq_len = 512;
    return cfg;
}

}  // namespace

static void BM_DecodeStep(benchmark::State& state) {
    const auto cfg = bench_config(static_cast<std::size_t>(state.range(0)));
    const auto params = model::init_params<float>(cfg, 1);
    infer::Engine engine(params, cfg);
    infer::KVCache cache(cfg);
    const std::vector<nd::TokenId> prompt(static_cast<std::size_t>(state.range(1)), 7);
    for (auto _ : state) {
        state.PauseTiming();
        cache.clear();
        engine.prefill(prompt, cache);
        state.ResumeTiming();
        benchmark::DoNotOptimize(engine.decode_step(9, cache));
    }
    state.counters["cache_bytes"] = static_cast<double>(cache.reserved_bytes());
}
BENCHMARK(BM_DecodeStep)->ArgsProduct({{4, 16}, {16, 256}})->ArgNames({"groups", "context"});

static void BM_Prefill(benchmark::State& state) {
    const auto cfg = bench_config(static_cast<std::size_t>(state.range(0)));
    const auto params = model::init_params<float>(cfg, 2);
    infer::Engine engine(params, cfg);
    infer::KVCache cache(cfg);
    const std::vector<nd::TokenId> prompt(64, 11);
    for (auto _ : state) {
        cache.clear();
        benchmark::DoNotOptimize(engine.prefill(prompt, cache));
    }
    state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Prefill)->Arg(4)->Arg(16)->ArgName("groups");

BENCHMARK_MAIN();
