#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "geb/util/kv_config.hpp"

namespace geb::model {

enum class NormPlacement { Post, Pre };

// Architecture hyperparameters. `geb_1_3b()` is the full-size model; tests
// use scaled-down instances of the same shape rules.
struct ModelConfig {
    std::size_t vocab_size = 64896;
    std::size_t hidden_size = 2048;
    std::size_t ffn_size = 5632;
    std::size_t n_heads = 16;
    std::size_t n_layers = 24;
    std::size_t kv_groups = 4;
    std::size_t max_seq_len = 4096;
    double rope_base = 10000.0;
    double norm_eps = 1e-5;
    NormPlacement norm_placement = NormPlacement::Post;

    static ModelConfig geb_1_3b() { return ModelConfig{}; }

    std::size_t head_dim() const { return hidden_size / n_heads; }
    // Query heads served by each key/value head.
    std::size_t group_size() const { return n_heads / kv_groups; }
    std::size_t kv_width() const { return kv_groups * head_dim(); }

    // Throws ConfigError naming the first violated constraint.
    void validate() const;

    util::KvDoc to_kv() const;
    static ModelConfig from_kv(const util::KvDoc& doc);

    bool operator==(const ModelConfig&) const = default;
};

// 8/3 of the hidden width, rounded up to a multiple of 256.
std::size_t swiglu_ffn_size(std::size_t hidden_size);

// Exact number of scalar parameters implied by the config.
std::uint64_t param_count(const ModelConfig& cfg);

std::string to_string(NormPlacement p);
NormPlacement norm_placement_from_string(const std::string& s);

}  // namespace geb::model
