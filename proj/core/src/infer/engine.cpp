#include "geb/infer/engine.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "geb/errors.hpp"
#include "geb/model/transformer.hpp"

namespace geb::infer {

KVCache::KVCache(const ModelConfig& cfg)
    : capacity_(cfg.max_seq_len), kv_groups_(cfg.kv_groups), head_dim_(cfg.head_dim()) {
    cfg.validate();
    const std::size_t slab = kv_groups_ * capacity_ * head_dim_;
    keys_.assign(cfg.n_layers, std::vector<float>(slab));
    values_.assign(cfg.n_layers, std::vector<float>(slab));
}

std::size_t KVCache::reserved_bytes() const {
    return 2 * keys_.size() * kv_groups_ * capacity_ * head_dim_ * sizeof(float);
}

std::size_t KVCache::used_bytes() const {
    return 2 * keys_.size() * kv_groups_ * cached_len_ * head_dim_ * sizeof(float);
}

namespace {

void rmsnorm_into(std::span<const float> x, const nd::TensorF& gain, double eps, std::span<float> out) {
    float ss = 0.0f;
    for (float v : x) ss += v * v;
    const float inv = 1.0f / std::sqrt(ss / static_cast<float>(x.size()) + static_cast<float>(eps));
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv * gain[i];
}

void rope_inplace(float* v, std::size_t head_dim, const model::RopeTables& tab) {
    for (std::size_t i = 0; i < head_dim; i += 2) {
        const float c = static_cast<float>(tab.cos[i]);
        const float s = static_cast<float>(tab.sin[i]);
        const float x0 = v[i];
        const float x1 = v[i + 1];
        v[i] = x0 * c + (-x1) * s;
        v[i + 1] = x1 * c + x0 * s;
    }
}

}  // namespace

Engine::Engine(const ModelParams<float>& params, const ModelConfig& cfg, std::size_t threads)
    : params_(params), cfg_(cfg), threads_(std::max<std::size_t>(threads, 1)) {
    cfg_.validate();
    model::check_shapes(params_, cfg_);
    const std::size_t h = cfg_.hidden_size;
    x_.resize(h);
    q_.resize(h);
    k_.resize(cfg_.kv_width());
    v_.resize(cfg_.kv_width());
    attn_.resize(h);
    merged_.resize(h);
    h_.resize(h);
    gate_.resize(cfg_.ffn_size);
    up_.resize(cfg_.ffn_size);
    ffn_.resize(h);
    scores_.resize(cfg_.max_seq_len);
    logits_.resize(cfg_.vocab_size);
}

void Engine::matvec(std::span<const float> x, const nd::TensorF& w, std::span<float> y) const {
    const std::size_t n = w.cols();
    const float* W = w.raw();
    auto run = [&](std::size_t begin, std::size_t end) {
        std::fill(y.begin() + static_cast<std::ptrdiff_t>(begin), y.begin() + static_cast<std::ptrdiff_t>(end), 0.0f);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const float xi = x[i];
            const float* row = W + i * n;
            for (std::size_t j = begin; j < end; ++j) y[j] += xi * row[j];
        }
    };
    // Column blocks are independent, so results do not depend on thread count.
    const std::size_t workers = std::min(threads_, n / 64);
    if (workers <= 1) {
        run(0, n);
        return;
    }
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t t = 1; t < workers; ++t) {
        const std::size_t b = t * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b < e) pool.emplace_back(run, b, e);
    }
    run(0, std::min(n, chunk));
}

void Engine::forward_one(TokenId token, KVCache& cache) {
    if (token >= cfg_.vocab_size) {
        throw VocabularyError("token id " + std::to_string(token) + " outside vocabulary of " +
                              std::to_string(cfg_.vocab_size));
    }
    if (cache.full()) {
        throw LengthError("KV cache is full at " + std::to_string(cache.capacity()) + " positions");
    }
    const std::size_t pos = cache.cached_len();
    const std::size_t hd = cfg_.head_dim();
    const std::size_t hidden = cfg_.hidden_size;
    const float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(hd)));
    const std::size_t position[1] = {pos};
    const model::RopeTables tab = model::rope_tables(position, hd, cfg_.rope_base);
    const bool post = cfg_.norm_placement == model::NormPlacement::Post;

    std::copy_n(params_.tok_embedding.raw() + static_cast<std::size_t>(token) * hidden, hidden, x_.begin());

    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
        const auto& layer = params_.layers[l];
        std::span<const float> attn_in = x_;
        if (!post) {
            rmsnorm_into(x_, layer.attn_norm, cfg_.norm_eps, h_);
            attn_in = h_;
        }
        matvec(attn_in, layer.wq, q_);
        matvec(attn_in, layer.wk, k_);
        matvec(attn_in, layer.wv, v_);
        for (std::size_t g = 0; g < cfg_.kv_groups; ++g) {
            rope_inplace(k_.data() + g * hd, hd, tab);
            std::copy_n(k_.data() + g * hd, hd, cache.key(l, g, pos));
            std::copy_n(v_.data() + g * hd, hd, cache.value(l, g, pos));
        }
        for (std::size_t h = 0; h < cfg_.n_heads; ++h) {
            const std::size_t g = h / cfg_.group_size();
            float* qh = q_.data() + h * hd;
            rope_inplace(qh, hd, tab);
            float mx = -INFINITY;
            for (std::size_t j = 0; j <= pos; ++j) {
                const float* kj = cache.key(l, g, j);
                float dot = 0.0f;
                for (std::size_t d = 0; d < hd; ++d) dot += qh[d] * kj[d];
                scores_[j] = dot * scale;
                mx = std::max(mx, scores_[j]);
            }
            float sum = 0.0f;
            for (std::size_t j = 0; j <= pos; ++j) {
                scores_[j] = std::exp(scores_[j] - mx);
                sum += scores_[j];
            }
            float* out = merged_.data() + h * hd;
            std::fill(out, out + hd, 0.0f);
            for (std::size_t j = 0; j <= pos; ++j) {
                const float p = scores_[j] / sum;
                const float* vj = cache.value(l, g, j);
                for (std::size_t d = 0; d < hd; ++d) out[d] += p * vj[d];
            }
        }
        matvec(merged_, layer.wo, attn_);

        if (post) {
            for (std::size_t i = 0; i < hidden; ++i) attn_[i] += x_[i];
            rmsnorm_into(attn_, layer.attn_norm, cfg_.norm_eps, h_);
            matvec(h_, layer.w_gate, gate_);
            matvec(h_, layer.w_up, up_);
            for (std::size_t i = 0; i < gate_.size(); ++i) gate_[i] = gate_[i] / (1.0f + std::exp(-gate_[i])) * up_[i];
            matvec(gate_, layer.w_down, ffn_);
            for (std::size_t i = 0; i < hidden; ++i) ffn_[i] += h_[i];
            rmsnorm_into(ffn_, layer.ffn_norm, cfg_.norm_eps, x_);
        } else {
            for (std::size_t i = 0; i < hidden; ++i) x_[i] += attn_[i];
            rmsnorm_into(x_, layer.ffn_norm, cfg_.norm_eps, h_);
            matvec(h_, layer.w_gate, gate_);
            matvec(h_, layer.w_up, up_);
            for (std::size_t i = 0; i < gate_.size(); ++i) gate_[i] = gate_[i] / (1.0f + std::exp(-gate_[i])) * up_[i];
            matvec(gate_, layer.w_down, ffn_);
            for (std::size_t i = 0; i < hidden; ++i) x_[i] += ffn_[i];
        }
    }
    rmsnorm_into(x_, params_.final_norm, cfg_.norm_eps, h_);
    matvec(h_, params_.out_head, logits_);
    cache.advance();
}

std::vector<float> Engine::prefill(std::span<const TokenId> tokens, KVCache& cache) {
    if (tokens.empty()) throw ArgumentError("prefill needs at least one prompt token");
    if (tokens.size() > cfg_.max_seq_len) {
        throw LengthError("prompt of " + std::to_string(tokens.size()) + " tokens exceeds max_seq_len " +
                          std::to_string(cfg_.max_seq_len));
    }
    cache.clear();
    for (TokenId t : tokens) forward_one(t, cache);
    return logits_;
}

std::vector<float> Engine::decode_step(TokenId token, KVCache& cache) {
    forward_one(token, cache);
    return logits_;
}

PrefillResult prefill(std::span<const TokenId> tokens, const ModelParams<float>& params, const ModelConfig& cfg) {
    Engine engine(params, cfg);
    KVCache cache(cfg);
    std::vector<float> logits = engine.prefill(tokens, cache);
    return PrefillResult{std::move(logits), std::move(cache)};
}

std::vector<float> decode_step(TokenId token, KVCache& cache, const ModelParams<float>& params,
                               const ModelConfig& cfg) {
    Engine engine(params, cfg);
    return engine.decode_step(token, cache);
}

}  // namespace geb::infer
