#include "geb/train/trainer.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "geb/errors.hpp"
#include "geb/model/checkpoint.hpp"
#include "geb/model/transformer.hpp"

namespace geb::train {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string join_tags(const std::vector<std::string>& tags) {
    if (tags.empty()) return "none";
    std::string out;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        if (i != 0) out += ";";
        out += tags[i];
    }
    return out;
}

std::string csv_safe(std::string s) {
    for (char& c : s) {
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    }
    return s;
}

}  // namespace

void TrainConfig::validate() const {
    model.validate();
    opt.validate();
    spike.validate();
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (seq_len == 0) throw ConfigError("seq_len must be positive");
    if (seq_len > model.max_seq_len) {
        throw ConfigError("seq_len " + std::to_string(seq_len) + " exceeds max_seq_len " +
                          std::to_string(model.max_seq_len));
    }
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (!(reserve_fraction >= 0.0 && reserve_fraction < 1.0)) {
        throw ConfigError("reserve_fraction must lie in [0, 1)");
    }
}

util::KvDoc TrainConfig::to_kv() const {
    util::KvDoc d;
    d.merge(model.to_kv(), "model.");
    d.merge(opt.to_kv(), "opt.");
    d.merge(spike.to_kv(), "spike.");
    d.set("train.batch_size", static_cast<std::uint64_t>(batch_size));
    d.set("train.seq_len", static_cast<std::uint64_t>(seq_len));
    d.set("train.steps", static_cast<std::uint64_t>(steps));
    d.set("train.epochs", static_cast<std::uint64_t>(epochs));
    d.set("train.checkpoint_every", static_cast<std::uint64_t>(checkpoint_every));
    d.set("train.reserve_fraction", reserve_fraction);
    d.set("train.seed", seed);
    if (poison_iteration) d.set("train.poison_iteration", static_cast<std::uint64_t>(*poison_iteration));
    return d;
}

TrainConfig TrainConfig::from_kv(const util::KvDoc& doc) {
    TrainConfig c;
    const util::KvDoc t = doc.section("train.");
    c.batch_size = t.get_uint("batch_size", c.batch_size);
    c.seq_len = t.get_uint("seq_len", c.seq_len);
    c.steps = t.get_uint("steps", c.steps);
    c.epochs = t.get_uint("epochs", c.epochs);
    c.checkpoint_every = t.get_uint("checkpoint_every", c.checkpoint_every);
    c.reserve_fraction = t.get_double("reserve_fraction", c.reserve_fraction);
    c.seed = t.get_uint("seed", c.seed);
    if (t.contains("poison_iteration")) c.poison_iteration = t.get_uint("poison_iteration", 0);
    c.model = ModelConfig::from_kv(doc.section("model."));
    c.opt = OptimizerConfig::from_kv(doc.section("opt."), OptimizerConfig::for_steps(c.steps));
    c.spike = SpikeConfig::from_kv(doc.section("spike."));
    c.validate();
    return c;
}

BatchEval evaluate_batch(const ModelParams<float>& params, const ModelConfig& cfg, const Batch& batch) {
    BatchEval out;
    std::size_t n_tokens = 0;
    for (const auto& row : batch.targets) n_tokens += row.size();
    if (n_tokens == 0) throw ArgumentError("evaluate_batch: empty batch");
    try {
        nd::Tape<float> tape;
        const auto vars = model::bind_params(tape, params);
        const float w = 1.0f / static_cast<float>(n_tokens);
        std::optional<nd::Var<float>> total;
        for (std::size_t r = 0; r < batch.inputs.size(); ++r) {
            const auto logits = model::model_forward<float>(tape, batch.inputs[r], vars, cfg);
            const std::vector<float> weights(batch.targets[r].size(), w);
            const auto ce = nd::cross_entropy<float>(logits, batch.targets[r], weights, nd::Reduction::Sum);
            total = total ? nd::add(*total, ce) : ce;
        }
        out.loss = static_cast<double>(total->value().item());
        if (!std::isfinite(out.loss)) {
            out.loss = kNaN;
            return out;
        }
        out.grads = tape.backward(*total);
    } catch (const NumericError&) {
        out.loss = kNaN;
        out.grads.clear();
    }
    return out;
}

double batch_loss(const ModelParams<float>& params, const ModelConfig& cfg, const Batch& batch) {
    std::size_t n_tokens = 0;
    for (const auto& row : batch.targets) n_tokens += row.size();
    if (n_tokens == 0) throw ArgumentError("batch_loss: empty batch");
    double total = 0.0;
    try {
        for (std::size_t r = 0; r < batch.inputs.size(); ++r) {
            const auto logits = model::model_forward<float>(batch.inputs[r], params, cfg);
            const std::vector<float> ones(batch.targets[r].size(), 1.0f);
            total += nd::cross_entropy<float>(logits, batch.targets[r], ones, nd::Reduction::Sum);
        }
    } catch (const NumericError&) {
        return kNaN;
    }
    return total / static_cast<double>(n_tokens);
}

Trainer::Trainer(TrainConfig cfg, std::vector<TokenId> corpus) : cfg_(std::move(cfg)) {
    cfg_.validate();
    for (TokenId t : corpus) {
        if (t >= cfg_.model.vocab_size) {
            throw VocabularyError("corpus token " + std::to_string(t) + " outside vocabulary of " +
                                  std::to_string(cfg_.model.vocab_size));
        }
    }
    plan_ = make_data_plan(corpus, cfg_.batch_size, cfg_.seq_len, cfg_.seed, cfg_.reserve_fraction);
    state_.params = model::init_params<float>(cfg_.model, cfg_.seed);
    state_.adam = make_adam_state(cfg_.model);
    state_.controls.opt = cfg_.opt;
    state_.seed = cfg_.seed;
}

Trainer::Trainer(TrainConfig cfg, std::vector<TokenId> corpus, TrainState state) : Trainer(std::move(cfg), std::move(corpus)) {
    model::check_shapes(state.params, cfg_.model);
    model::check_shapes(state.adam.m, cfg_.model);
    model::check_shapes(state.adam.v, cfg_.model);
    if (state.controls.reserve_next > plan_.reserve.size()) {
        throw StateError("resumed state references reserve batch " + std::to_string(state.controls.reserve_next) +
                         " of " + std::to_string(plan_.reserve.size()));
    }
    state_ = std::move(state);
}

void Trainer::log(std::size_t iteration, std::string action, std::string detail) {
    actions_.push_back(ActionRecord{iteration, std::move(action), std::move(detail)});
}

bool Trainer::iterate() {
    if (plan_.train.empty() || state_.cursor >= iteration_limit()) return false;
    const std::size_t it = state_.cursor;
    if (state_.controls.skip_set.count(it) != 0) {
        log(it, "skip", "batch excluded");
        ++state_.cursor;
        return true;
    }

    Batch batch = plan_.train[it % plan_.train.size()];
    if (cfg_.poison_iteration && *cfg_.poison_iteration == it) {
        batch = shuffle_labels(batch, state_.seed + it);
        log(it, "poison", "labels shuffled");
    }
    BatchEval ev = evaluate_batch(state_.params, cfg_.model, batch);
    bool apply = std::isfinite(ev.loss);
    std::vector<std::string> tags;

    const SpikeVerdict verdict = detect_spike(state_.loss_history, ev.loss, cfg_.spike);
    if (verdict.spike) {
        const std::string tag = verdict.divergence ? "divergence" : "spike";
        tags.push_back(tag);
        log(it, tag, "loss=" + util::format_double(ev.loss));
        if (!cfg_.spike.strategy_order.empty()) {
            const MitigationResult res = mitigate_spike(state_.controls, it, cfg_.spike, plan_.reserve.size());
            for (const auto& a : res.actions) {
                log(it, a.action, a.detail);
                tags.push_back(a.action);
            }
            if (res.replacement) {
                ev = evaluate_batch(state_.params, cfg_.model, plan_.reserve[*res.replacement]);
                apply = std::isfinite(ev.loss);
            } else if (res.current_excluded) {
                apply = false;
            }
        }
    }

    if (apply) {
        if (state_.controls.egs_alpha < 1.0) egs_scale(ev.grads, state_.controls.egs_alpha);
        const double lr = cosine_lr(state_.adam.step + 1, state_.controls.opt);
        adamw_step(state_.params, state_.adam, ev.grads, lr, state_.controls.opt);
        state_.loss_history.push_back(ev.loss);
        while (state_.loss_history.size() > cfg_.spike.window) state_.loss_history.pop_front();
        curve_.push_back(LossRow{it, ev.loss, lr, join_tags(tags)});
    }
    ++state_.cursor;

    if (apply && cfg_.checkpoint_every != 0 && !cfg_.out_dir.empty() &&
        state_.adam.step % cfg_.checkpoint_every == 0) {
        std::filesystem::create_directories(cfg_.out_dir);
        save_checkpoint(cfg_.out_dir / ("step_" + std::to_string(state_.adam.step) + ".ckpt"));
    }
    return true;
}

bool Trainer::run_until(std::size_t optimizer_steps) {
    while (state_.step() < optimizer_steps) {
        if (!iterate()) return false;
    }
    return true;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
    nlohmann::json meta;
    meta["step"] = state_.adam.step;
    meta["cursor"] = state_.cursor;
    meta["seed"] = state_.seed;
    meta["loss_history"] = std::vector<double>(state_.loss_history.begin(), state_.loss_history.end());
    meta["reserve_next"] = state_.controls.reserve_next;
    meta["skip_set"] = std::vector<std::size_t>(state_.controls.skip_set.begin(), state_.controls.skip_set.end());
    meta["egs_alpha"] = state_.controls.egs_alpha;
    meta["lr_peak"] = state_.controls.opt.lr_peak;
    meta["lr_min"] = state_.controls.opt.lr_min;

    model::Checkpoint ck;
    ck.config = cfg_.to_kv();
    ck.metadata = meta.dump();
    model::append_params(ck, state_.params);
    model::append_params(ck, state_.adam.m, "adam.m.");
    model::append_params(ck, state_.adam.v, "adam.v.");
    model::write_checkpoint(path, ck);
}

TrainState Trainer::load_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg) {
    const model::Checkpoint ck = model::read_checkpoint(path);
    TrainState s;
    s.params = model::extract_params(ck, cfg.model);
    s.adam.m = model::extract_params(ck, cfg.model, "adam.m.");
    s.adam.v = model::extract_params(ck, cfg.model, "adam.v.");
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(ck.metadata);
        s.adam.step = meta.at("step").get<std::size_t>();
        s.cursor = meta.at("cursor").get<std::size_t>();
        s.seed = meta.at("seed").get<std::uint64_t>();
        for (double l : meta.at("loss_history")) s.loss_history.push_back(l);
        s.controls.opt = cfg.opt;
        s.controls.reserve_next = meta.at("reserve_next").get<std::size_t>();
        for (std::size_t i : meta.at("skip_set")) s.controls.skip_set.insert(i);
        s.controls.egs_alpha = meta.at("egs_alpha").get<double>();
        s.controls.opt.lr_peak = meta.at("lr_peak").get<double>();
        s.controls.opt.lr_min = meta.at("lr_min").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": bad training metadata: " + e.what());
    }
    return s;
}

TrainResult train_loop(const TrainConfig& cfg, const std::vector<TokenId>& corpus) {
    Trainer trainer(cfg, corpus);
    const bool reached = trainer.run_until(cfg.steps);
    TrainResult result{trainer.state(), trainer.curve(), trainer.actions(), !reached};
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        write_loss_curve(cfg.out_dir / "loss_curve.csv", result.curve);
        write_actions(cfg.out_dir / "actions.csv", result.actions);
        trainer.save_checkpoint(cfg.out_dir / "final.ckpt");
    }
    return result;
}

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossRow>& rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "step,loss,lr,action\n";
    for (const auto& r : rows) {
        out << r.step << ',' << util::format_double(r.loss) << ',' << util::format_double(r.lr) << ','
            << csv_safe(r.action) << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<LossRow> read_loss_curve(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "step,loss,lr,action") {
        throw IoError(path.string() + ": missing loss-curve header");
    }
    std::vector<LossRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string step, loss, lr, action;
        if (!std::getline(fields, step, ',') || !std::getline(fields, loss, ',') || !std::getline(fields, lr, ',') ||
            !std::getline(fields, action)) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 4 fields");
        }
        try {
            rows.push_back(LossRow{std::stoull(step), std::stod(loss), std::stod(lr), action});
        } catch (const std::exception&) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad number");
        }
    }
    return rows;
}

void write_actions(const std::filesystem::path& path, const std::vector<ActionRecord>& actions) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "iteration,action,detail\n";
    for (const auto& a : actions) out << a.iteration << ',' << csv_safe(a.action) << ',' << csv_safe(a.detail) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<double> smoothed_losses(const std::vector<LossRow>& rows, std::size_t window) {
    if (window == 0) throw ArgumentError("smoothing window must be positive");
    std::vector<double> out;
    out.reserve(rows.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        sum += rows[i].loss;
        if (i >= window) sum -= rows[i - window].loss;
        out.push_back(sum / static_cast<double>(std::min(i + 1, window)));
    }
    return out;
}

}  // namespace geb::train
