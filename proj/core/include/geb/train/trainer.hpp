#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "geb/model/config.hpp"
#include "geb/model/params.hpp"
#include "geb/train/data.hpp"
#include "geb/train/optimizer.hpp"
#include "geb/train/spike.hpp"
#include "geb/util/kv_config.hpp"

namespace geb::train {

using model::ModelConfig;

struct TrainConfig {
    ModelConfig model;
    OptimizerConfig opt;
    SpikeConfig spike;
    std::size_t batch_size = 4;
    std::size_t seq_len = 32;
    std::size_t steps = 300;          // optimizer steps
    std::size_t epochs = 1;           // passes over the training batches
    std::size_t checkpoint_every = 0; // 0 disables periodic checkpoints
    double reserve_fraction = 0.01;
    std::uint64_t seed = 0;
    std::optional<std::size_t> poison_iteration;  // fault injection: shuffle labels of this batch
    std::filesystem::path out_dir;                // empty: write nothing

    void validate() const;

    // Keys are namespaced: model.*, opt.*, spike.*, train.*
    util::KvDoc to_kv() const;
    static TrainConfig from_kv(const util::KvDoc& doc);
};

struct TrainState {
    ModelParams<float> params;
    AdamState adam;
    SpikeControls controls;
    std::size_t cursor = 0;  // data iterations consumed, including skipped ones
    std::deque<double> loss_history;
    std::uint64_t seed = 0;

    std::size_t step() const { return adam.step; }
};

// One row per optimizer step. `step` is the data iteration index, so
// skipped iterations show up as gaps.
struct LossRow {
    std::size_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    std::string action;  // "none" or ';'-joined tags
};

struct ActionRecord {
    std::size_t iteration = 0;
    std::string action;
    std::string detail;
};

struct BatchEval {
    double loss = 0.0;
    nd::GradMap<float> grads;
};

// Mean next-token cross-entropy over the batch and its gradient. A
// non-finite forward yields loss = NaN and no gradients.
BatchEval evaluate_batch(const ModelParams<float>& params, const ModelConfig& cfg, const Batch& batch);

double batch_loss(const ModelParams<float>& params, const ModelConfig& cfg, const Batch& batch);

class Trainer {
   public:
    Trainer(TrainConfig cfg, std::vector<TokenId> corpus);
    // Resumes from a state previously produced with the same config and corpus.
    Trainer(TrainConfig cfg, std::vector<TokenId> corpus, TrainState state);

    // Consumes one data iteration. Returns false once the corpus is exhausted.
    bool iterate();

    // Iterates until `state().step()` reaches `optimizer_steps` or the corpus
    // runs out. Returns true if the target was reached.
    bool run_until(std::size_t optimizer_steps);

    const TrainConfig& config() const { return cfg_; }
    const TrainState& state() const { return state_; }
    const DataPlan& plan() const { return plan_; }
    const std::vector<LossRow>& curve() const { return curve_; }
    const std::vector<ActionRecord>& actions() const { return actions_; }
    std::size_t iteration_limit() const { return cfg_.epochs * plan_.train.size(); }

    void save_checkpoint(const std::filesystem::path& path) const;
    static TrainState load_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg);

   private:
    void log(std::size_t iteration, std::string action, std::string detail = {});

    TrainConfig cfg_;
    DataPlan plan_;
    TrainState state_;
    std::vector<LossRow> curve_;
    std::vector<ActionRecord> actions_;
};

struct TrainResult {
    TrainState state;
    std::vector<LossRow> curve;
    std::vector<ActionRecord> actions;
    bool stopped_early = false;
};

// Full run; writes loss_curve.csv, actions.csv, periodic checkpoints and
// final.ckpt under cfg.out_dir when it is set.
TrainResult train_loop(const TrainConfig& cfg, const std::vector<TokenId>& corpus);

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossRow>& rows);
std::vector<LossRow> read_loss_curve(const std::filesystem::path& path);
void write_actions(const std::filesystem::path& path, const std::vector<ActionRecord>& actions);

// Trailing mean over `window` rows (shorter at the start).
std::vector<double> smoothed_losses(const std::vector<LossRow>& rows, std::size_t window = 10);

}  // namespace geb::train
