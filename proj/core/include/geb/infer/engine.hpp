#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "geb/model/config.hpp"
#include "geb/model/params.hpp"
#include "geb/ndops/ops.hpp"

namespace geb::infer {

using model::ModelConfig;
using model::ModelParams;
using nd::TokenId;

// Per-layer keys and values, kv_groups x max_seq_len x head_dim each,
// allocated once up front. Keys are stored after rotary embedding.
class KVCache {
   public:
    explicit KVCache(const ModelConfig& cfg);

    std::size_t cached_len() const { return cached_len_; }
    std::size_t capacity() const { return capacity_; }
    std::size_t n_layers() const { return keys_.size(); }
    std::size_t kv_groups() const { return kv_groups_; }
    std::size_t head_dim() const { return head_dim_; }
    bool full() const { return cached_len_ == capacity_; }

    float* key(std::size_t layer, std::size_t group, std::size_t pos) {
        return keys_[layer].data() + (group * capacity_ + pos) * head_dim_;
    }
    const float* key(std::size_t layer, std::size_t group, std::size_t pos) const {
        return keys_[layer].data() + (group * capacity_ + pos) * head_dim_;
    }
    float* value(std::size_t layer, std::size_t group, std::size_t pos) {
        return values_[layer].data() + (group * capacity_ + pos) * head_dim_;
    }
    const float* value(std::size_t layer, std::size_t group, std::size_t pos) const {
        return values_[layer].data() + (group * capacity_ + pos) * head_dim_;
    }

    // Bytes held by the pre-allocated slabs.
    std::size_t reserved_bytes() const;
    // Bytes occupied by the cached positions; linear in cached_len and kv_groups.
    std::size_t used_bytes() const;

    void advance() { ++cached_len_; }
    void clear() { cached_len_ = 0; }

   private:
    std::size_t capacity_;
    std::size_t kv_groups_;
    std::size_t head_dim_;
    std::size_t cached_len_ = 0;
    std::vector<std::vector<float>> keys_;
    std::vector<std::vector<float>> values_;
};

// Incremental decoder over read-only parameters. One engine (and its cache)
// per decode session; several engines may share the same params.
class Engine {
   public:
    Engine(const ModelParams<float>& params, const ModelConfig& cfg, std::size_t threads = 1);

    const ModelConfig& config() const { return cfg_; }

    // Runs the prompt through the model, filling `cache` from position 0.
    // Returns logits at the last prompt position.
    std::vector<float> prefill(std::span<const TokenId> tokens, KVCache& cache);

    // Appends one token at position cache.cached_len(); returns its logits.
    std::vector<float> decode_step(TokenId token, KVCache& cache);

   private:
    void forward_one(TokenId token, KVCache& cache);
    void matvec(std::span<const float> x, const nd::TensorF& w, std::span<float> y) const;

    const ModelParams<float>& params_;
    ModelConfig cfg_;
    std::size_t threads_;

    std::vector<float> x_, q_, k_, v_, attn_, merged_, h_, gate_, up_, ffn_, scores_, logits_;
};

struct PrefillResult {
    std::vector<float> logits;
    KVCache cache;
};

PrefillResult prefill(std::span<const TokenId> tokens, const ModelParams<float>& params, const ModelConfig& cfg);

std::vector<float> decode_step(TokenId token, KVCache& cache, const ModelParams<float>& params,
                               const ModelConfig& cfg);

}  // namespace geb::infer
