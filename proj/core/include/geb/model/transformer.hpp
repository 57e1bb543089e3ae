#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "geb/model/config.hpp"
#include "geb/model/params.hpp"
#include "geb/ndops/tape.hpp"

namespace geb::model {

using nd::TokenId;
using nd::Var;

// cos/sin of position * base^(-2i/head_dim), computed in double. Row p holds
// the angle for pair i at columns 2i and 2i+1.
struct RopeTables {
    std::vector<double> cos;  // positions.size() x head_dim
    std::vector<double> sin;
    std::size_t head_dim = 0;
};

RopeTables rope_tables(std::span<const std::size_t> positions, std::size_t head_dim, double base);

// Rotates dimension pairs (2i, 2i+1) of each row of `x` (seq x head_dim) by
// the angle of that row's position.
template <typename T>
Tensor<T> apply_rope(const Tensor<T>& x, std::span<const std::size_t> positions, double base);

template <typename T>
Var<T> apply_rope(Var<T> x, std::span<const std::size_t> positions, double base);

// x / rms(x) * gain over the last axis.
template <typename T>
Var<T> rmsnorm(Var<T> x, Var<T> gain, double eps);

// (silu(x W_gate) * (x W_up)) W_down
template <typename T>
Var<T> swiglu_ffn(Var<T> x, Var<T> w_gate, Var<T> w_up, Var<T> w_down);

// Causal grouped-query self-attention over x (seq x hidden). Row i sits at
// absolute position start_pos + i.
template <typename T>
Var<T> gqa_attention(Var<T> x, const LayerVars<T>& layer, const ModelConfig& cfg, std::size_t start_pos = 0);

template <typename T>
Var<T> block_forward(Var<T> x, const LayerVars<T>& layer, const ModelConfig& cfg, std::size_t start_pos = 0);

// Logits (seq x vocab) for `tokens`.
template <typename T>
Var<T> model_forward(nd::Tape<T>& tape, std::span<const TokenId> tokens, const ParamVars<T>& params,
                     const ModelConfig& cfg);

// Untraced convenience wrapper.
template <typename T>
Tensor<T> model_forward(std::span<const TokenId> tokens, const ModelParams<T>& params, const ModelConfig& cfg);

}  // namespace geb::model
