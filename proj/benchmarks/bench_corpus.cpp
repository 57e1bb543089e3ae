#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "geb/corpus/pipeline.hpp"

using namespace geb;

namespace {

std::vector<corpus::Shard> make_shards(std::size_t docs) {
    static const std::vector<std::string> texts = {
        "<p>The river runs past the old mill. Visit https://example.com/mill for photos.</p>",
        "Farmers grow wheat in the valley. The harvest arrives in late summer.",
        "Farmers grow wheat in the valley. Farmers grow wheat in the valley. Rain helped this year.",
        "山谷里的农民种植小麦。今年夏天收成很好。",
        "click here",
    };
    std::vector<corpus::Shard> shards(2);
    for (std::size_t s = 0; s < 2; ++s) {
        shards[s].name = "shard" + std::to_string(s);
        for (std::size_t i = 0; i < docs; ++i) {
            shards[s].docs.push_back(
                {std::to_string(s) + "-" + std::to_string(i), texts[(i + s) % texts.size()], "bench", {}});
        }
    }
    return shards;
}

}  // namespace

static void BM_PipelineRun(benchmark::State& state) {
    const corpus::PipelineConfig cfg;
    const auto ref = corpus::train_ngram({"The river runs past the mill. Farmers grow wheat in the valley."}, 3);
    const auto shards = make_shards(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(corpus::pipeline_run(shards, cfg, &ref));
    state.SetItemsProcessed(state.iterations() * state.range(0) * 2);
}
BENCHMARK(BM_PipelineRun)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_Perplexity(benchmark::State& state) {
    const auto model = corpus::train_ngram({"The river runs past the mill. Farmers grow wheat in the valley."}, 3);
    const std::string text = "Farmers grow wheat past the river. The mill runs in the valley.";
    for (auto _ : state) benchmark::DoNotOptimize(corpus::perplexity(model, text));
}
BENCHMARK(BM_Perplexity);

BENCHMARK_MAIN();
