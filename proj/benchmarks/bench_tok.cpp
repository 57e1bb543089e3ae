#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "geb/tok/bpe.hpp"

using namespace geb;

namespace {

std::string sample_text(std::size_t bytes) {
    static const std::vector<std::string> parts = {"The model reads ", "中文和英文混合的文本。", "tokens per second ",
                                                   "🙂 emoji and ", "numbers 12345 "};
    std::string out;
    for (std::size_t i = 0; out.size() < bytes; ++i) out += parts[i % parts.size()];
    return out;
}

}  // namespace

static void BM_BpeTrain(benchmark::State& state) {
    const std::vector<std::string> corpus = {sample_text(16 * 1024)};
    for (auto _ : state) benchmark::DoNotOptimize(tok::bpe_train(corpus, static_cast<std::size_t>(state.range(0))));
}
BENCHMARK(BM_BpeTrain)->Arg(300)->Arg(500)->Unit(benchmark::kMillisecond);

static void BM_BpeEncode(benchmark::State& state) {
    const std::string text = sample_text(static_cast<std::size_t>(state.range(0)));
    const tok::Vocab vocab = tok::bpe_train({sample_text(16 * 1024)}, 500);
    for (auto _ : state) benchmark::DoNotOptimize(tok::encode(text, vocab));
    state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BpeEncode)->Arg(1 << 10)->Arg(1 << 14);

static void BM_BpeDecode(benchmark::State& state) {
    const tok::Vocab vocab = tok::bpe_train({sample_text(16 * 1024)}, 500);
    const auto ids = tok::encode(sample_text(1 << 14), vocab);
    for (auto _ : state) benchmark::DoNotOptimize(tok::decode(ids, vocab));
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(ids.size()));
}
BENCHMARK(BM_BpeDecode);

BENCHMARK_MAIN();
