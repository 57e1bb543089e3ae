#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "geb/infer/engine.hpp"

namespace geb::infer {

struct RepeatTiming {
    double prefill_ms = 0.0;
    double decode_ms = 0.0;
    double tokens_per_sec = 0.0;  // decode phase only
};

struct ThroughputReport {
    std::string label;
    std::string cpu;
    std::size_t threads = 1;
    std::size_t prompt_len = 0;
    std::size_t gen_len = 0;
    std::size_t n_heads = 0;
    std::size_t kv_groups = 0;
    std::vector<RepeatTiming> repeats;
    double median_tokens_per_sec = 0.0;
    double median_prefill_ms = 0.0;
};

struct BenchmarkOptions {
    std::size_t prompt_len = 16;
    std::size_t gen_len = 32;
    std::size_t repeats = 5;
    std::size_t threads = 1;
    std::uint64_t seed = 0;
    std::string label = "model";
};

// Times prefill and greedy decoding separately; decode throughput is
// gen_len / decode wall time, summarised by the median over repeats.
ThroughputReport benchmark_throughput(const ModelParams<float>& params, const ModelConfig& cfg,
                                      const BenchmarkOptions& opts);

// Runs two models with their repeats interleaved (a, b, a, b, ...) so drift
// on the host affects both equally.
std::pair<ThroughputReport, ThroughputReport> benchmark_pair(const ModelParams<float>& params_a,
                                                             const ModelConfig& cfg_a,
                                                             const ModelParams<float>& params_b,
                                                             const ModelConfig& cfg_b, BenchmarkOptions opts_a,
                                                             BenchmarkOptions opts_b);

// One `repeat ...` line per repeat followed by one `summary ...` line, all
// space-separated key=value pairs.
std::string format_report(const ThroughputReport& report);
ThroughputReport parse_report(const std::string& text);

// "model name" from /proc/cpuinfo with spaces replaced, or "unknown".
std::string cpu_model_name();

}  // namespace geb::infer
