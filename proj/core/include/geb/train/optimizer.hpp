#pragma once

#include <cstddef>
#include <cstdint>

#include "geb/model/params.hpp"
#include "geb/ndops/tape.hpp"
#include "geb/util/kv_config.hpp"

namespace geb::train {

using model::ModelParams;
using nd::GradMap;
using nd::TensorF;

struct OptimizerConfig {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.1;
    double lr_peak = 4e-4;
    double lr_min = 4e-5;
    std::size_t warmup_steps = 0;
    std::size_t total_steps = 1;

    // Full-scale defaults with warmup over 1% of the run.
    static OptimizerConfig for_steps(std::size_t total_steps);

    void validate() const;

    util::KvDoc to_kv() const;
    static OptimizerConfig from_kv(const util::KvDoc& doc);
    static OptimizerConfig from_kv(const util::KvDoc& doc, OptimizerConfig base);
};

// Linear warmup 0 -> lr_peak, then cosine decay to lr_min at total_steps.
// Steps past total_steps stay at lr_min.
double cosine_lr(std::size_t step, const OptimizerConfig& opt);

// One decoupled-weight-decay Adam update of a single tensor; `t` is the
// 1-based step used for bias correction.
void adamw_update(TensorF& param, TensorF& m, TensorF& v, const TensorF& grad, std::size_t t, double lr,
                  const OptimizerConfig& opt);

struct AdamState {
    ModelParams<float> m;
    ModelParams<float> v;
    std::size_t step = 0;
};

AdamState make_adam_state(const model::ModelConfig& cfg);

// Updates every parameter; parameters absent from `grads` see a zero
// gradient. Advances state.step.
void adamw_step(ModelParams<float>& params, AdamState& state, const GradMap<float>& grads, double lr,
                const OptimizerConfig& opt);

}  // namespace geb::train
