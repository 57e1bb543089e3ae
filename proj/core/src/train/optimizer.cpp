#include "geb/train/optimizer.hpp"

#include <cmath>
#include <numbers>

namespace geb::train {

OptimizerConfig OptimizerConfig::for_steps(std::size_t total_steps) {
    OptimizerConfig c;
    c.total_steps = total_steps;
    c.warmup_steps = total_steps / 100;
    return c;
}

void OptimizerConfig::validate() const {
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in (0, 1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in (0, 1)");
    if (!(eps > 0.0)) throw ConfigError("eps must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    if (!(lr_min <= lr_peak)) throw ConfigError("lr_min must not exceed lr_peak");
    if (total_steps == 0) throw ConfigError("total_steps must be positive");
    if (warmup_steps >= total_steps) throw ConfigError("warmup_steps must be below total_steps");
}

util::KvDoc OptimizerConfig::to_kv() const {
    util::KvDoc d;
    d.set("beta1", beta1);
    d.set("beta2", beta2);
    d.set("eps", eps);
    d.set("weight_decay", weight_decay);
    d.set("lr_peak", lr_peak);
    d.set("lr_min", lr_min);
    d.set("warmup_steps", static_cast<std::uint64_t>(warmup_steps));
    d.set("total_steps", static_cast<std::uint64_t>(total_steps));
    return d;
}

OptimizerConfig OptimizerConfig::from_kv(const util::KvDoc& d) { return from_kv(d, OptimizerConfig{}); }

OptimizerConfig OptimizerConfig::from_kv(const util::KvDoc& d, OptimizerConfig c) {
    c.beta1 = d.get_double("beta1", c.beta1);
    c.beta2 = d.get_double("beta2", c.beta2);
    c.eps = d.get_double("eps", c.eps);
    c.weight_decay = d.get_double("weight_decay", c.weight_decay);
    c.lr_peak = d.get_double("lr_peak", c.lr_peak);
    c.lr_min = d.get_double("lr_min", c.lr_min);
    c.warmup_steps = d.get_uint("warmup_steps", c.warmup_steps);
    c.total_steps = d.get_uint("total_steps", c.total_steps);
    return c;
}

double cosine_lr(std::size_t step, const OptimizerConfig& opt) {
    if (step >= opt.total_steps) return opt.lr_min;
    if (step < opt.warmup_steps) {
        return opt.lr_peak * (static_cast<double>(step) / static_cast<double>(opt.warmup_steps));
    }
    if (step == opt.warmup_steps) return opt.lr_peak;
    const double progress = static_cast<double>(step - opt.warmup_steps) /
                            static_cast<double>(opt.total_steps - opt.warmup_steps);
    return opt.lr_min + 0.5 * (opt.lr_peak - opt.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

void adamw_update(TensorF& param, TensorF& m, TensorF& v, const TensorF& grad, std::size_t t, double lr,
                  const OptimizerConfig& opt) {
    if (grad.shape() != param.shape() || m.shape() != param.shape() || v.shape() != param.shape()) {
        throw StateError("adamw: gradient " + nd::shape_str(grad.shape()) + " / moments " +
                         nd::shape_str(m.shape()) + " do not match parameter " + nd::shape_str(param.shape()));
    }
    const float decay = static_cast<float>(1.0 - lr * opt.weight_decay);
    const float b1 = static_cast<float>(opt.beta1);
    const float b2 = static_cast<float>(opt.beta2);
    const double td = static_cast<double>(t);
    const float c1 = static_cast<float>(1.0 - std::pow(opt.beta1, td));
    const float c2 = static_cast<float>(1.0 - std::pow(opt.beta2, td));
    const float step = static_cast<float>(lr);
    const float eps = static_cast<float>(opt.eps);
    float* p = param.raw();
    float* mm = m.raw();
    float* vv = v.raw();
    const float* g = grad.raw();
    for (std::size_t i = 0; i < param.numel(); ++i) {
        p[i] *= decay;
        mm[i] = b1 * mm[i] + (1.0f - b1) * g[i];
        vv[i] = b2 * vv[i] + (1.0f - b2) * g[i] * g[i];
        const float mhat = mm[i] / c1;
        const float vhat = vv[i] / c2;
        p[i] -= step * mhat / (std::sqrt(vhat) + eps);
    }
}

AdamState make_adam_state(const model::ModelConfig& cfg) {
    return AdamState{model::zero_params<float>(cfg), model::zero_params<float>(cfg), 0};
}

void adamw_step(ModelParams<float>& params, AdamState& state, const GradMap<float>& grads, double lr,
                const OptimizerConfig& opt) {
    auto p = params.named();
    auto m = state.m.named();
    auto v = state.v.named();
    if (p.size() != m.size() || p.size() != v.size()) throw StateError("optimizer moments do not mirror parameters");
    for (const auto& [name, g] : grads) {
        (void)g;
        bool known = false;
        for (const auto& entry : p) known = known || entry.first == name;
        if (!known) throw StateError("gradient for unknown parameter " + name);
    }
    const std::size_t t = state.step + 1;
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto it = grads.find(p[i].first);
        if (it != grads.end()) {
            adamw_update(*p[i].second, *m[i].second, *v[i].second, it->second, t, lr, opt);
        } else {
            const TensorF zero(p[i].second->shape());
            adamw_update(*p[i].second, *m[i].second, *v[i].second, zero, t, lr, opt);
        }
    }
    state.step = t;
}

}  // namespace geb::train
