#pragma once

#include <cstddef>
#include <deque>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "geb/ndops/tape.hpp"
#include "geb/train/optimizer.hpp"
#include "geb/util/kv_config.hpp"

namespace geb::train {

enum class Strategy { Replace, Skip, Egs, Lr };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);
// Parses "replace,skip,egs,lr" (any subset, any order; "none" or "" for none).
std::vector<Strategy> parse_strategies(const std::string& csv);
std::string strategies_to_string(const std::vector<Strategy>& s);

struct SpikeConfig {
    std::size_t window = 50;
    double sigma_mult = 4.0;
    std::size_t skip_radius = 200;
    double egs_alpha = 0.1;
    double lr_shrink = 0.5;
    std::vector<Strategy> strategy_order = {Strategy::Replace, Strategy::Skip, Strategy::Egs, Strategy::Lr};

    void validate() const;
    bool enabled(Strategy s) const;

    util::KvDoc to_kv() const;
    static SpikeConfig from_kv(const util::KvDoc& doc);
    static SpikeConfig from_kv(const util::KvDoc& doc, SpikeConfig base);
};

struct SpikeVerdict {
    bool spike = false;
    bool divergence = false;  // loss was NaN or infinite
};

// Fires when `new_loss` exceeds mean + sigma_mult * stddev of the last
// `window` losses; never fires before the window is full. Non-finite losses
// always fire and set `divergence`.
SpikeVerdict detect_spike(const std::deque<double>& history, double new_loss, const SpikeConfig& spike);

// Multiplies the token-embedding gradient by alpha; every other gradient is
// left untouched.
void egs_scale(nd::GradMap<float>& grads, double alpha);

// Mutable part of the trainer that spike mitigation acts on.
struct SpikeControls {
    OptimizerConfig opt;           // effective schedule (lr_peak may shrink)
    double egs_alpha = 1.0;        // 1 = inactive
    std::set<std::size_t> skip_set;
    std::size_t reserve_next = 0;  // next unused reserve batch
};

struct MitigationAction {
    std::string action;
    std::string detail;
};

struct MitigationResult {
    std::optional<std::size_t> replacement;  // reserve batch to retry with
    bool current_excluded = false;           // skip window covers the spike batch
    std::vector<MitigationAction> actions;
};

// Applies the configured strategies in order for a spike at data index
// `spike_step`. `reserve_available` is the size of the reserve pool.
MitigationResult mitigate_spike(SpikeControls& controls, std::size_t spike_step, const SpikeConfig& spike,
                                std::size_t reserve_available);

}  // namespace geb::train
