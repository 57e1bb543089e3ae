#include "geb/model/transformer.hpp"

#include <cmath>
#include <numeric>

namespace geb::model {

namespace {

// Large finite negative added to future positions; exp() of it underflows to
// exactly zero, so masked keys contribute nothing.
constexpr double kMaskValue = -1e30;

void check_rope_dim(std::size_t head_dim) {
    if (head_dim % 2 != 0) {
        throw ConfigError("rotary embedding needs an even head_dim, got " + std::to_string(head_dim));
    }
}

}  // namespace

RopeTables rope_tables(std::span<const std::size_t> positions, std::size_t head_dim, double base) {
    check_rope_dim(head_dim);
    RopeTables t;
    t.head_dim = head_dim;
    t.cos.resize(positions.size() * head_dim);
    t.sin.resize(positions.size() * head_dim);
    for (std::size_t r = 0; r < positions.size(); ++r) {
        const double m = static_cast<double>(positions[r]);
        for (std::size_t i = 0; i < head_dim / 2; ++i) {
            const double theta = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
            const double angle = m * theta;
            const double c = std::cos(angle);
            const double s = std::sin(angle);
            t.cos[r * head_dim + 2 * i] = c;
            t.cos[r * head_dim + 2 * i + 1] = c;
            t.sin[r * head_dim + 2 * i] = s;
            t.sin[r * head_dim + 2 * i + 1] = s;
        }
    }
    return t;
}

template <typename T>
Tensor<T> apply_rope(const Tensor<T>& x, std::span<const std::size_t> positions, double base) {
    const std::size_t d = x.cols();
    if (x.rank() != 2 || x.rows() != positions.size()) {
        throw DimensionError("apply_rope: " + std::to_string(positions.size()) + " positions for input " +
                             nd::shape_str(x.shape()));
    }
    const RopeTables tab = rope_tables(positions, d, base);
    Tensor<T> out(x.shape());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t i = 0; i < d; i += 2) {
            const T c = static_cast<T>(tab.cos[r * d + i]);
            const T s = static_cast<T>(tab.sin[r * d + i]);
            const T x0 = x.at(r, i);
            const T x1 = x.at(r, i + 1);
            out.at(r, i) = x0 * c + (-x1) * s;
            out.at(r, i + 1) = x1 * c + x0 * s;
        }
    }
    return out;
}

template <typename T>
Var<T> apply_rope(Var<T> x, std::span<const std::size_t> positions, double base) {
    const std::size_t rows = x.value().rows();
    const std::size_t d = x.value().cols();
    if (x.value().rank() != 2 || rows != positions.size()) {
        throw DimensionError("apply_rope: " + std::to_string(positions.size()) + " positions for input " +
                             nd::shape_str(x.value().shape()));
    }
    const RopeTables tab = rope_tables(positions, d, base);
    Tensor<T> cos_t({rows, d});
    Tensor<T> sin_t({rows, d});
    for (std::size_t i = 0; i < rows * d; ++i) {
        cos_t[i] = static_cast<T>(tab.cos[i]);
        sin_t[i] = static_cast<T>(tab.sin[i]);
    }
    // Pair rotation as a signed permutation: (x0, x1) -> (-x1, x0).
    Tensor<T> rot({d, d});
    for (std::size_t i = 0; i < d; i += 2) {
        rot.at(i + 1, i) = T{-1};
        rot.at(i, i + 1) = T{1};
    }
    nd::Tape<T>& tape = *x.tape;
    Var<T> rotated = nd::matmul(x, tape.constant(std::move(rot)));
    return nd::add(nd::mul(x, tape.constant(std::move(cos_t))), nd::mul(rotated, tape.constant(std::move(sin_t))));
}

template <typename T>
Var<T> rmsnorm(Var<T> x, Var<T> gain, double eps) {
    return nd::mul(nd::rms_normalize(x, eps), gain);
}

template <typename T>
Var<T> swiglu_ffn(Var<T> x, Var<T> w_gate, Var<T> w_up, Var<T> w_down) {
    Var<T> gate = nd::silu(nd::matmul(x, w_gate));
    Var<T> up = nd::matmul(x, w_up);
    return nd::matmul(nd::mul(gate, up), w_down);
}

template <typename T>
Var<T> gqa_attention(Var<T> x, const LayerVars<T>& layer, const ModelConfig& cfg, std::size_t start_pos) {
    const std::size_t seq = x.value().rows();
    if (start_pos + seq > cfg.max_seq_len) {
        throw LengthError("attention over positions up to " + std::to_string(start_pos + seq) +
                          " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
    }
    const std::size_t hd = cfg.head_dim();
    const std::size_t hidden = cfg.hidden_size;
    nd::Tape<T>& tape = *x.tape;

    std::vector<std::size_t> positions(seq);
    std::iota(positions.begin(), positions.end(), start_pos);

    Tensor<T> mask({seq, seq});
    for (std::size_t i = 0; i < seq; ++i) {
        for (std::size_t j = i + 1; j < seq; ++j) mask.at(i, j) = static_cast<T>(kMaskValue);
    }
    Var<T> mask_v = tape.constant(std::move(mask));
    const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd)));

    Var<T> q = nd::matmul(x, layer.wq);
    Var<T> k = nd::matmul(x, layer.wk);
    Var<T> v = nd::matmul(x, layer.wv);

    std::vector<Var<T>> k_heads;
    std::vector<Var<T>> v_heads;
    for (std::size_t g = 0; g < cfg.kv_groups; ++g) {
        k_heads.push_back(apply_rope(nd::select_cols(k, g * hd, hd), positions, cfg.rope_base));
        v_heads.push_back(nd::select_cols(v, g * hd, hd));
    }

    Var<T> merged;
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        const std::size_t g = h / cfg.group_size();
        Var<T> qh = apply_rope(nd::select_cols(q, h * hd, hd), positions, cfg.rope_base);
        Var<T> scores = nd::scale(nd::matmul(qh, k_heads[g], nd::Trans::No, nd::Trans::Yes), inv_sqrt_d);
        Var<T> probs = nd::softmax(nd::add(scores, mask_v), 1);
        Var<T> placed = nd::place_cols(nd::matmul(probs, v_heads[g]), h * hd, hidden);
        merged = h == 0 ? placed : nd::add(merged, placed);
    }
    return nd::matmul(merged, layer.wo);
}

template <typename T>
Var<T> block_forward(Var<T> x, const LayerVars<T>& layer, const ModelConfig& cfg, std::size_t start_pos) {
    if (cfg.norm_placement == NormPlacement::Post) {
        Var<T> h = rmsnorm(nd::add(x, gqa_attention(x, layer, cfg, start_pos)), layer.attn_norm, cfg.norm_eps);
        return rmsnorm(nd::add(h, swiglu_ffn(h, layer.w_gate, layer.w_up, layer.w_down)), layer.ffn_norm,
                       cfg.norm_eps);
    }
    Var<T> a = gqa_attention(rmsnorm(x, layer.attn_norm, cfg.norm_eps), layer, cfg, start_pos);
    Var<T> h = nd::add(x, a);
    Var<T> f = swiglu_ffn(rmsnorm(h, layer.ffn_norm, cfg.norm_eps), layer.w_gate, layer.w_up, layer.w_down);
    return nd::add(h, f);
}

template <typename T>
Var<T> model_forward(nd::Tape<T>& tape, std::span<const TokenId> tokens, const ParamVars<T>& params,
                     const ModelConfig& cfg) {
    if (tokens.size() > cfg.max_seq_len) {
        throw LengthError("sequence of " + std::to_string(tokens.size()) + " tokens exceeds max_seq_len " +
                          std::to_string(cfg.max_seq_len));
    }
    for (TokenId id : tokens) {
        if (id >= cfg.vocab_size) {
            throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " +
                                  std::to_string(cfg.vocab_size));
        }
    }
    if (tokens.empty()) return tape.constant(Tensor<T>({0, cfg.vocab_size}));
    Var<T> x = nd::gather_rows(params.tok_embedding, tokens);
    for (const auto& layer : params.layers) x = block_forward(x, layer, cfg);
    x = rmsnorm(x, params.final_norm, cfg.norm_eps);
    return nd::matmul(x, params.out_head);
}

template <typename T>
Tensor<T> model_forward(std::span<const TokenId> tokens, const ModelParams<T>& params, const ModelConfig& cfg) {
    nd::Tape<T> tape(false);
    const ParamVars<T> vars = bind_params(tape, params, false);
    return model_forward(tape, tokens, vars, cfg).value();
}

#define GEB_INSTANTIATE_TRANSFORMER(T)                                                                         \
    template Tensor<T> apply_rope(const Tensor<T>&, std::span<const std::size_t>, double);                    \
    template Var<T> apply_rope(Var<T>, std::span<const std::size_t>, double);                                 \
    template Var<T> rmsnorm(Var<T>, Var<T>, double);                                                          \
    template Var<T> swiglu_ffn(Var<T>, Var<T>, Var<T>, Var<T>);                                               \
    template Var<T> gqa_attention(Var<T>, const LayerVars<T>&, const ModelConfig&, std::size_t);              \
    template Var<T> block_forward(Var<T>, const LayerVars<T>&, const ModelConfig&, std::size_t);              \
    template Var<T> model_forward(nd::Tape<T>&, std::span<const TokenId>, const ParamVars<T>&, const ModelConfig&); \
    template Tensor<T> model_forward(std::span<const TokenId>, const ModelParams<T>&, const ModelConfig&);

GEB_INSTANTIATE_TRANSFORMER(float)
GEB_INSTANTIATE_TRANSFORMER(double)

#undef GEB_INSTANTIATE_TRANSFORMER

}  // namespace geb::model
