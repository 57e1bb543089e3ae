#include "geb/infer/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "geb/errors.hpp"

namespace geb::infer {

void SamplerConfig::validate() const {
    if (mode == SamplingMode::TopK && k < 1) throw ConfigError("top_k sampling needs k >= 1");
    if (!(temperature >= 0.0)) throw ConfigError("temperature must be non-negative");
}

TokenId argmax(std::span<const float> logits) {
    if (logits.empty()) throw ArgumentError("argmax over empty logits");
    std::size_t best = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!std::isfinite(logits[i])) throw NumericError("non-finite logit at index " + std::to_string(i));
        if (logits[i] > logits[best]) best = i;
    }
    return static_cast<TokenId>(best);
}

Sampler::Sampler(SamplerConfig cfg) : cfg_(cfg), rng_(cfg.seed) { cfg_.validate(); }

TokenId Sampler::sample(std::span<const float> logits) {
    const TokenId best = argmax(logits);
    if (cfg_.mode == SamplingMode::Greedy || cfg_.k == 1 || cfg_.temperature < kGreedyTemperature) return best;

    const std::size_t k = std::min(cfg_.k, logits.size());
    std::vector<std::size_t> order(logits.size());
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) { return logits[a] > logits[b] || (logits[a] == logits[b] && a < b); });
    const double top = logits[order[0]];
    std::vector<double> weights(k);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        weights[i] = std::exp((static_cast<double>(logits[order[i]]) - top) / cfg_.temperature);
        total += weights[i];
    }
    // Inverse-CDF draw from a raw 53-bit uniform keeps results independent of
    // the standard library's distribution implementations.
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53 * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        acc += weights[i];
        if (u < acc) return static_cast<TokenId>(order[i]);
    }
    return static_cast<TokenId>(order[k - 1]);
}

std::vector<TokenId> generate(Engine& engine, std::span<const TokenId> prompt, std::size_t max_new, Sampler& sampler,
                              std::optional<TokenId> stop) {
    KVCache cache(engine.config());
    std::vector<TokenId> out;
    if (max_new == 0) return out;
    std::vector<float> logits = engine.prefill(prompt, cache);
    while (out.size() < max_new) {
        const TokenId next = sampler.sample(logits);
        out.push_back(next);
        if ((stop && next == *stop) || out.size() == max_new || cache.full()) break;
        logits = engine.decode_step(next, cache);
    }
    return out;
}

SamplingMode sampling_mode_from_string(const std::string& s) {
    if (s == "greedy") return SamplingMode::Greedy;
    if (s == "top_k" || s == "top-k") return SamplingMode::TopK;
    throw ConfigError("sampler mode must be 'greedy' or 'top_k', got '" + s + "'");
}

}  // namespace geb::infer
