#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "geb/model/config.hpp"
#include "geb/ndops/tape.hpp"
#include "geb/ndops/tensor.hpp"

namespace geb::model {

using nd::Tensor;

// Weights are stored input-major: activations multiply from the left (x · W).
template <typename T>
struct LayerParams {
    Tensor<T> wq;       // hidden x hidden
    Tensor<T> wk;       // hidden x kv_width
    Tensor<T> wv;       // hidden x kv_width
    Tensor<T> wo;       // hidden x hidden
    Tensor<T> w_gate;   // hidden x ffn
    Tensor<T> w_up;     // hidden x ffn
    Tensor<T> w_down;   // ffn x hidden
    Tensor<T> attn_norm;
    Tensor<T> ffn_norm;

    bool operator==(const LayerParams&) const = default;
};

// Untied: tok_embedding and out_head are separate tensors. No bias vectors.
template <typename T>
struct ModelParams {
    Tensor<T> tok_embedding;  // vocab x hidden
    std::vector<LayerParams<T>> layers;
    Tensor<T> final_norm;     // hidden
    Tensor<T> out_head;       // hidden x vocab

    // Visits (name, tensor) in declaration order; the order is the
    // checkpoint order and the optimizer order.
    template <typename F>
    void for_each(F&& fn) {
        visit(*this, fn);
    }
    template <typename F>
    void for_each(F&& fn) const {
        visit(*this, fn);
    }

    std::vector<std::pair<std::string, Tensor<T>*>> named() {
        std::vector<std::pair<std::string, Tensor<T>*>> out;
        for_each([&](const std::string& n, Tensor<T>& t) { out.emplace_back(n, &t); });
        return out;
    }

    std::uint64_t numel() const {
        std::uint64_t n = 0;
        for_each([&](const std::string&, const Tensor<T>& t) { n += t.numel(); });
        return n;
    }

    template <typename U>
    ModelParams<U> cast() const;

    bool operator==(const ModelParams&) const = default;

   private:
    template <typename Self, typename F>
    static void visit(Self& self, F& fn) {
        fn(std::string("tok_embedding"), self.tok_embedding);
        for (std::size_t i = 0; i < self.layers.size(); ++i) {
            auto& l = self.layers[i];
            const std::string p = "layers." + std::to_string(i) + ".";
            fn(p + "wq", l.wq);
            fn(p + "wk", l.wk);
            fn(p + "wv", l.wv);
            fn(p + "wo", l.wo);
            fn(p + "w_gate", l.w_gate);
            fn(p + "w_up", l.w_up);
            fn(p + "w_down", l.w_down);
            fn(p + "attn_norm", l.attn_norm);
            fn(p + "ffn_norm", l.ffn_norm);
        }
        fn(std::string("final_norm"), self.final_norm);
        fn(std::string("out_head"), self.out_head);
    }
};

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
    ModelParams<U> out;
    out.tok_embedding = tok_embedding.template cast<U>();
    for (const auto& l : layers) {
        out.layers.push_back(LayerParams<U>{l.wq.template cast<U>(), l.wk.template cast<U>(), l.wv.template cast<U>(),
                                            l.wo.template cast<U>(), l.w_gate.template cast<U>(),
                                            l.w_up.template cast<U>(), l.w_down.template cast<U>(),
                                            l.attn_norm.template cast<U>(), l.ffn_norm.template cast<U>()});
    }
    out.final_norm = final_norm.template cast<U>();
    out.out_head = out_head.template cast<U>();
    return out;
}

// All-zero parameters of the right shapes (also the layout for optimizer moments).
template <typename T>
ModelParams<T> zero_params(const ModelConfig& cfg);

// normal(0, 0.02) matrices, unit norm gains; deterministic in `seed`.
template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

// Throws DimensionError if any tensor disagrees with the config's shapes.
template <typename T>
void check_shapes(const ModelParams<T>& params, const ModelConfig& cfg);

// Parameters recorded on a tape, either trainable or as constants.
template <typename T>
struct LayerVars {
    nd::Var<T> wq, wk, wv, wo, w_gate, w_up, w_down, attn_norm, ffn_norm;
};

template <typename T>
struct ParamVars {
    nd::Var<T> tok_embedding;
    std::vector<LayerVars<T>> layers;
    nd::Var<T> final_norm;
    nd::Var<T> out_head;
};

template <typename T>
ParamVars<T> bind_params(nd::Tape<T>& tape, const ModelParams<T>& params, bool trainable = true);

}  // namespace geb::model
