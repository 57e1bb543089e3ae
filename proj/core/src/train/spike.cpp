#include "geb/train/spike.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace geb::train {

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::Replace:
            return "replace";
        case Strategy::Skip:
            return "skip";
        case Strategy::Egs:
            return "egs";
        case Strategy::Lr:
            return "lr";
    }
    return "?";
}

Strategy strategy_from_string(const std::string& s) {
    if (s == "replace") return Strategy::Replace;
    if (s == "skip") return Strategy::Skip;
    if (s == "egs") return Strategy::Egs;
    if (s == "lr") return Strategy::Lr;
    throw ConfigError("unknown spike strategy '" + s + "' (expected replace, skip, egs, lr)");
}

std::vector<Strategy> parse_strategies(const std::string& csv) {
    std::vector<Strategy> out;
    std::istringstream in(csv);
    std::string item;
    while (std::getline(in, item, ',')) {
        item.erase(0, item.find_first_not_of(' '));
        item.erase(item.find_last_not_of(' ') + 1);
        if (item.empty() || item == "none") continue;
        const Strategy s = strategy_from_string(item);
        if (std::find(out.begin(), out.end(), s) != out.end()) {
            throw ConfigError("spike strategy '" + item + "' listed twice");
        }
        out.push_back(s);
    }
    return out;
}

std::string strategies_to_string(const std::vector<Strategy>& s) {
    if (s.empty()) return "none";
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i != 0) out += ",";
        out += to_string(s[i]);
    }
    return out;
}

void SpikeConfig::validate() const {
    if (window == 0) throw ConfigError("spike window must be positive");
    if (!(sigma_mult > 0.0)) throw ConfigError("sigma_mult must be positive");
    if (!(egs_alpha > 0.0 && egs_alpha <= 1.0)) throw ConfigError("egs_alpha must lie in (0, 1]");
    if (!(lr_shrink > 0.0 && lr_shrink <= 1.0)) throw ConfigError("lr_shrink must lie in (0, 1]");
}

bool SpikeConfig::enabled(Strategy s) const {
    return std::find(strategy_order.begin(), strategy_order.end(), s) != strategy_order.end();
}

util::KvDoc SpikeConfig::to_kv() const {
    util::KvDoc d;
    d.set("window", static_cast<std::uint64_t>(window));
    d.set("sigma_mult", sigma_mult);
    d.set("skip_radius", static_cast<std::uint64_t>(skip_radius));
    d.set("egs_alpha", egs_alpha);
    d.set("lr_shrink", lr_shrink);
    d.set("strategies", strategies_to_string(strategy_order));
    return d;
}

SpikeConfig SpikeConfig::from_kv(const util::KvDoc& d) { return from_kv(d, SpikeConfig{}); }

SpikeConfig SpikeConfig::from_kv(const util::KvDoc& d, SpikeConfig c) {
    c.window = d.get_uint("window", c.window);
    c.sigma_mult = d.get_double("sigma_mult", c.sigma_mult);
    c.skip_radius = d.get_uint("skip_radius", c.skip_radius);
    c.egs_alpha = d.get_double("egs_alpha", c.egs_alpha);
    c.lr_shrink = d.get_double("lr_shrink", c.lr_shrink);
    if (auto s = d.get("strategies")) c.strategy_order = parse_strategies(*s);
    c.validate();
    return c;
}

SpikeVerdict detect_spike(const std::deque<double>& history, double new_loss, const SpikeConfig& spike) {
    if (!std::isfinite(new_loss)) return SpikeVerdict{true, true};
    if (history.size() < spike.window) return {};
    const auto first = history.end() - static_cast<std::ptrdiff_t>(spike.window);
    double mean = 0.0;
    for (auto it = first; it != history.end(); ++it) mean += *it;
    mean /= static_cast<double>(spike.window);
    double var = 0.0;
    for (auto it = first; it != history.end(); ++it) var += (*it - mean) * (*it - mean);
    const double sd = std::sqrt(var / static_cast<double>(spike.window));
    return SpikeVerdict{new_loss > mean + spike.sigma_mult * sd, false};
}

void egs_scale(nd::GradMap<float>& grads, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("egs alpha must lie in (0, 1], got " + std::to_string(alpha));
    if (alpha == 1.0) return;
    auto it = grads.find("tok_embedding");
    if (it == grads.end()) return;
    const float a = static_cast<float>(alpha);
    for (float& g : it->second.data()) g *= a;
}

MitigationResult mitigate_spike(SpikeControls& controls, std::size_t spike_step, const SpikeConfig& spike,
                                std::size_t reserve_available) {
    MitigationResult result;
    for (Strategy s : spike.strategy_order) {
        switch (s) {
            case Strategy::Replace:
                if (controls.reserve_next < reserve_available) {
                    result.replacement = controls.reserve_next++;
                    result.actions.push_back({"replace", "reserve=" + std::to_string(*result.replacement)});
                } else {
                    result.actions.push_back({"warning", "reserve batches exhausted; replace skipped"});
                }
                break;
            case Strategy::Skip: {
                const std::size_t lo = spike_step >= spike.skip_radius ? spike_step - spike.skip_radius : 0;
                const std::size_t hi = spike_step + spike.skip_radius;
                for (std::size_t i = lo; i <= hi; ++i) controls.skip_set.insert(i);
                result.current_excluded = true;
                result.actions.push_back({"skip", std::to_string(lo) + "-" + std::to_string(hi)});
                break;
            }
            case Strategy::Egs:
                controls.egs_alpha = controls.egs_alpha < 1.0 ? controls.egs_alpha * spike.egs_alpha : spike.egs_alpha;
                result.actions.push_back({"egs", "alpha=" + util::format_double(controls.egs_alpha)});
                break;
            case Strategy::Lr:
                controls.opt.lr_peak *= spike.lr_shrink;
                controls.opt.lr_min = std::min(controls.opt.lr_min, controls.opt.lr_peak);
                result.actions.push_back({"lr", "lr_peak=" + util::format_double(controls.opt.lr_peak)});
                break;
        }
    }
    return result;
}

}  // namespace geb::train
