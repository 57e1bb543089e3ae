#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "geb/infer/engine.hpp"

namespace geb::infer {

enum class SamplingMode { Greedy, TopK };

struct SamplerConfig {
    SamplingMode mode = SamplingMode::Greedy;
    std::size_t k = 1;
    double temperature = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

// Temperatures below this are treated as the zero-temperature (argmax) limit.
inline constexpr double kGreedyTemperature = 1e-5;

// Index of the largest logit, lowest index on ties. Throws NumericError on
// non-finite input.
TokenId argmax(std::span<const float> logits);

// Stateful: consecutive draws advance one seeded generator, so a fixed seed
// gives a fixed token sequence.
class Sampler {
   public:
    explicit Sampler(SamplerConfig cfg);

    TokenId sample(std::span<const float> logits);

   private:
    SamplerConfig cfg_;
    std::mt19937_64 rng_;
};

// Prompt continuation of up to `max_new` tokens; stops early after emitting
// `stop` or when the context window is full.
std::vector<TokenId> generate(Engine& engine, std::span<const TokenId> prompt, std::size_t max_new, Sampler& sampler,
                              std::optional<TokenId> stop = std::nullopt);

SamplingMode sampling_mode_from_string(const std::string& s);

}  // namespace geb::infer
