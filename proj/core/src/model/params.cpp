#include "geb/model/params.hpp"

#include <random>

namespace geb::model {

namespace {

constexpr double kInitStd = 0.02;

template <typename T>
LayerParams<T> zero_layer(const ModelConfig& cfg) {
    const std::size_t h = cfg.hidden_size;
    const std::size_t kv = cfg.kv_width();
    const std::size_t f = cfg.ffn_size;
    return LayerParams<T>{Tensor<T>({h, h}), Tensor<T>({h, kv}), Tensor<T>({h, kv}), Tensor<T>({h, h}),
                          Tensor<T>({h, f}), Tensor<T>({h, f}),  Tensor<T>({f, h}),  Tensor<T>({h}),
                          Tensor<T>({h})};
}

}  // namespace

template <typename T>
ModelParams<T> zero_params(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams<T> p;
    p.tok_embedding = Tensor<T>({cfg.vocab_size, cfg.hidden_size});
    for (std::size_t i = 0; i < cfg.n_layers; ++i) p.layers.push_back(zero_layer<T>(cfg));
    p.final_norm = Tensor<T>({cfg.hidden_size});
    p.out_head = Tensor<T>({cfg.hidden_size, cfg.vocab_size});
    return p;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
    ModelParams<T> p = zero_params<T>(cfg);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, kInitStd);
    p.for_each([&](const std::string&, Tensor<T>& t) {
        if (t.rank() == 1) {
            for (T& v : t.data()) v = T{1};
        } else {
            for (T& v : t.data()) v = static_cast<T>(normal(rng));
        }
    });
    return p;
}

template <typename T>
void check_shapes(const ModelParams<T>& params, const ModelConfig& cfg) {
    cfg.validate();
    if (params.layers.size() != cfg.n_layers) {
        throw DimensionError("parameters hold " + std::to_string(params.layers.size()) + " layers, config expects " +
                             std::to_string(cfg.n_layers));
    }
    const std::size_t h = cfg.hidden_size;
    const std::size_t kv = cfg.kv_width();
    const std::size_t f = cfg.ffn_size;
    const std::vector<nd::Shape> layer_shapes = {{h, h}, {h, kv}, {h, kv}, {h, h}, {h, f},
                                                 {h, f}, {f, h},  {h},     {h}};
    std::vector<nd::Shape> expected = {{cfg.vocab_size, h}};
    for (std::size_t i = 0; i < cfg.n_layers; ++i) {
        expected.insert(expected.end(), layer_shapes.begin(), layer_shapes.end());
    }
    expected.push_back({h});
    expected.push_back({h, cfg.vocab_size});
    std::size_t i = 0;
    params.for_each([&](const std::string& name, const Tensor<T>& t) {
        if (t.shape() != expected[i]) {
            throw DimensionError("parameter " + name + " has shape " + nd::shape_str(t.shape()) + ", expected " +
                                 nd::shape_str(expected[i]));
        }
        ++i;
    });
}

template <typename T>
ParamVars<T> bind_params(nd::Tape<T>& tape, const ModelParams<T>& params, bool trainable) {
    auto bind = [&](const std::string& name, const Tensor<T>& t) {
        return trainable ? tape.parameter(name, t) : tape.constant(t);
    };
    ParamVars<T> v;
    v.tok_embedding = bind("tok_embedding", params.tok_embedding);
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        const auto& l = params.layers[i];
        const std::string p = "layers." + std::to_string(i) + ".";
        v.layers.push_back(LayerVars<T>{bind(p + "wq", l.wq), bind(p + "wk", l.wk), bind(p + "wv", l.wv),
                                        bind(p + "wo", l.wo), bind(p + "w_gate", l.w_gate),
                                        bind(p + "w_up", l.w_up), bind(p + "w_down", l.w_down),
                                        bind(p + "attn_norm", l.attn_norm), bind(p + "ffn_norm", l.ffn_norm)});
    }
    v.final_norm = bind("final_norm", params.final_norm);
    v.out_head = bind("out_head", params.out_head);
    return v;
}

template ModelParams<float> zero_params<float>(const ModelConfig&);
template ModelParams<double> zero_params<double>(const ModelConfig&);
template ModelParams<float> init_params<float>(const ModelConfig&, std::uint64_t);
template ModelParams<double> init_params<double>(const ModelConfig&, std::uint64_t);
template void check_shapes<float>(const ModelParams<float>&, const ModelConfig&);
template void check_shapes<double>(const ModelParams<double>&, const ModelConfig&);
template ParamVars<float> bind_params<float>(nd::Tape<float>&, const ModelParams<float>&, bool);
template ParamVars<double> bind_params<double>(nd::Tape<double>&, const ModelParams<double>&, bool);

}  // namespace geb::model
