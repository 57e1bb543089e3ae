#include "geb/align/losses.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "geb/errors.hpp"
#include "geb/model/transformer.hpp"
#include "geb/train/optimizer.hpp"

namespace geb::align {

namespace {

void check_ids(const std::vector<TokenId>& ids, const ModelConfig& cfg, const char* what) {
    for (TokenId t : ids) {
        if (t >= cfg.vocab_size) {
            throw VocabularyError(std::string(what) + " token " + std::to_string(t) + " outside vocabulary of " +
                                  std::to_string(cfg.vocab_size));
        }
    }
}

// Inputs, targets and per-target response mask for prompt ++ response.
struct Scored {
    std::vector<TokenId> inputs;
    std::vector<TokenId> targets;
    std::vector<bool> in_response;
    std::size_t n_response = 0;
};

Scored score_layout(const std::vector<TokenId>& prompt, const std::vector<TokenId>& response) {
    std::vector<TokenId> seq = prompt;
    seq.insert(seq.end(), response.begin(), response.end());
    Scored s;
    if (seq.size() < 2) return s;
    s.inputs.assign(seq.begin(), seq.end() - 1);
    s.targets.assign(seq.begin() + 1, seq.end());
    for (std::size_t j = 0; j < s.targets.size(); ++j) {
        const bool r = j + 1 >= prompt.size();
        s.in_response.push_back(r);
        s.n_response += r ? 1 : 0;
    }
    return s;
}

template <typename T>
std::vector<T> mask_weights(const Scored& s, T on) {
    std::vector<T> w(s.targets.size(), T{0});
    for (std::size_t j = 0; j < w.size(); ++j) {
        if (s.in_response[j]) w[j] = on;
    }
    return w;
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<nlohmann::json> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            rows.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

std::string field(const nlohmann::json& row, const char* key, const std::filesystem::path& path, std::size_t i) {
    if (!row.is_object() || !row.contains(key) || !row.at(key).is_string()) {
        throw IoError(path.string() + ": record " + std::to_string(i + 1) + " lacks string field '" + key + "'");
    }
    return row.at(key).get<std::string>();
}

}  // namespace

void SftExample::validate(const ModelConfig& cfg) const {
    if (response.empty()) throw ArgumentError("SFT example has an empty response");
    if (prompt.size() + response.size() > cfg.max_seq_len) {
        throw LengthError("SFT example of " + std::to_string(prompt.size() + response.size()) +
                          " tokens exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
    }
    check_ids(prompt, cfg, "prompt");
    check_ids(response, cfg, "response");
}

void PreferencePair::validate(const ModelConfig& cfg) const {
    if (chosen.empty() || rejected.empty()) throw ArgumentError("preference pair has an empty response");
    if (chosen == rejected) throw ArgumentError("preference pair has identical chosen and rejected responses");
    const std::size_t longest = prompt.size() + std::max(chosen.size(), rejected.size());
    if (longest > cfg.max_seq_len) {
        throw LengthError("preference pair of " + std::to_string(longest) + " tokens exceeds max_seq_len " +
                          std::to_string(cfg.max_seq_len));
    }
    check_ids(prompt, cfg, "prompt");
    check_ids(chosen, cfg, "chosen");
    check_ids(rejected, cfg, "rejected");
}

void DpoConfig::validate() const {
    if (!(beta > 0.0)) throw ConfigError("DPO beta must be positive");
}

template <typename T>
nd::Var<T> response_nll(nd::Tape<T>& tape, const ParamVars<T>& vars, const std::vector<TokenId>& prompt,
                        const std::vector<TokenId>& response, const ModelConfig& cfg) {
    const Scored s = score_layout(prompt, response);
    if (s.n_response == 0) throw ArgumentError("response has no scorable token");
    const auto logits = model::model_forward<T>(tape, s.inputs, vars, cfg);
    const std::vector<T> w = mask_weights<T>(s, T{1});
    return nd::cross_entropy<T>(logits, s.targets, w, nd::Reduction::Sum);
}

template <typename T>
nd::Var<T> sft_loss(nd::Tape<T>& tape, const ParamVars<T>& vars, const SftExample& ex, const ModelConfig& cfg) {
    ex.validate(cfg);
    const Scored s = score_layout(ex.prompt, ex.response);
    if (s.n_response == 0) throw ArgumentError("SFT example has no scorable response token");
    const auto logits = model::model_forward<T>(tape, s.inputs, vars, cfg);
    const std::vector<T> w = mask_weights<T>(s, T{1});
    return nd::cross_entropy<T>(logits, s.targets, w, nd::Reduction::Mean);
}

template <typename T>
T sft_loss(const SftExample& ex, const ModelParams<T>& params, const ModelConfig& cfg) {
    nd::Tape<T> tape(false);
    const auto vars = model::bind_params(tape, params, false);
    return sft_loss<T>(tape, vars, ex, cfg).value().item();
}

template <typename T>
nd::Var<T> dpo_loss(nd::Tape<T>& tape, const ParamVars<T>& policy, const ModelParams<T>& reference,
                    const PreferencePair& pair, const ModelConfig& cfg, const DpoConfig& dpo) {
    pair.validate(cfg);
    dpo.validate();
    T ref_margin;
    {
        nd::Tape<T> ref_tape(false);
        const auto ref = model::bind_params(ref_tape, reference, false);
        const T ref_c = response_nll<T>(ref_tape, ref, pair.prompt, pair.chosen, cfg).value().item();
        const T ref_r = response_nll<T>(ref_tape, ref, pair.prompt, pair.rejected, cfg).value().item();
        ref_margin = ref_c - ref_r;  // lp_ref(r) - lp_ref(c)
    }
    const auto nll_c = response_nll<T>(tape, policy, pair.prompt, pair.chosen, cfg);
    const auto nll_r = response_nll<T>(tape, policy, pair.prompt, pair.rejected, cfg);
    // z = beta * [(nll_r - nll_c) + (nll_ref_c - nll_ref_r)]
    const auto diff = nd::add(nd::sub(nll_r, nll_c), tape.constant(nd::Tensor<T>::scalar(ref_margin)));
    const auto z = nd::scale(diff, static_cast<T>(dpo.beta));
    // -log sigmoid(z) == cross-entropy of logits [0, z] at class 1.
    const auto pair_logits = nd::mul(tape.constant(nd::Tensor<T>::matrix(1, 2, {T{0}, T{1}})), z);
    const std::vector<TokenId> target{1};
    const std::vector<T> weight{T{1}};
    return nd::cross_entropy<T>(pair_logits, target, weight, nd::Reduction::Sum);
}

template <typename T>
T dpo_loss(const PreferencePair& pair, const ModelParams<T>& policy, const ModelParams<T>& reference,
           const ModelConfig& cfg, const DpoConfig& dpo) {
    nd::Tape<T> tape(false);
    const auto vars = model::bind_params(tape, policy, false);
    return dpo_loss<T>(tape, vars, reference, pair, cfg, dpo).value().item();
}

std::vector<SftExample> load_sft_jsonl(const std::filesystem::path& path, const Tokenizer& tokenize) {
    const auto rows = read_jsonl(path);
    std::vector<SftExample> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.push_back(SftExample{tokenize(field(rows[i], "prompt", path, i)),
                                 tokenize(field(rows[i], "response", path, i))});
    }
    return out;
}

std::vector<PreferencePair> load_dpo_jsonl(const std::filesystem::path& path, const Tokenizer& tokenize) {
    const auto rows = read_jsonl(path);
    std::vector<PreferencePair> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.push_back(PreferencePair{tokenize(field(rows[i], "prompt", path, i)),
                                     tokenize(field(rows[i], "chosen", path, i)),
                                     tokenize(field(rows[i], "rejected", path, i))});
    }
    return out;
}

namespace {

train::OptimizerConfig constant_lr(const FinetuneConfig& ft) {
    train::OptimizerConfig opt;
    opt.lr_peak = ft.lr;
    opt.lr_min = ft.lr;
    opt.weight_decay = ft.weight_decay;
    opt.warmup_steps = 0;
    opt.total_steps = std::max<std::size_t>(ft.steps, 1);
    opt.validate();
    return opt;
}

template <typename LossFn>
std::vector<double> finetune(ModelParams<float>& params, const ModelConfig& cfg, std::size_t n_data,
                             const FinetuneConfig& ft, LossFn&& loss_fn) {
    if (n_data == 0) throw ArgumentError("fine-tuning data is empty");
    const train::OptimizerConfig opt = constant_lr(ft);
    train::AdamState adam = train::make_adam_state(cfg);
    std::vector<double> losses;
    for (std::size_t step = 0; step < ft.steps; ++step) {
        nd::Tape<float> tape;
        const auto vars = model::bind_params(tape, params);
        const auto loss = loss_fn(tape, vars, step % n_data);
        const double value = loss.value().item();
        if (!std::isfinite(value)) throw NumericError("fine-tuning loss diverged at step " + std::to_string(step));
        const auto grads = tape.backward(loss);
        train::adamw_step(params, adam, grads, ft.lr, opt);
        losses.push_back(value);
    }
    return losses;
}

}  // namespace

std::vector<double> finetune_sft(ModelParams<float>& params, const ModelConfig& cfg,
                                 const std::vector<SftExample>& data, const FinetuneConfig& ft) {
    for (const auto& ex : data) ex.validate(cfg);
    return finetune(params, cfg, data.size(), ft,
                    [&](nd::Tape<float>& tape, const ParamVars<float>& vars, std::size_t i) {
                        return sft_loss<float>(tape, vars, data[i], cfg);
                    });
}

std::vector<double> finetune_dpo(ModelParams<float>& params, const ModelConfig& cfg,
                                 const std::vector<PreferencePair>& data, const DpoConfig& dpo,
                                 const FinetuneConfig& ft) {
    for (const auto& p : data) p.validate(cfg);
    const ModelParams<float> reference = params;
    return finetune(params, cfg, data.size(), ft,
                    [&](nd::Tape<float>& tape, const ParamVars<float>& vars, std::size_t i) {
                        return dpo_loss<float>(tape, vars, reference, data[i], cfg, dpo);
                    });
}

#define GEB_INSTANTIATE_ALIGN(T)                                                                              \
    template nd::Var<T> response_nll(nd::Tape<T>&, const ParamVars<T>&, const std::vector<TokenId>&,        \
                                     const std::vector<TokenId>&, const ModelConfig&);                       \
    template nd::Var<T> sft_loss(nd::Tape<T>&, const ParamVars<T>&, const SftExample&, const ModelConfig&); \
    template T sft_loss(const SftExample&, const ModelParams<T>&, const ModelConfig&);                       \
    template nd::Var<T> dpo_loss(nd::Tape<T>&, const ParamVars<T>&, const ModelParams<T>&,                  \
                                 const PreferencePair&, const ModelConfig&, const DpoConfig&);               \
    template T dpo_loss(const PreferencePair&, const ModelParams<T>&, const ModelParams<T>&,                \
                        const ModelConfig&, const DpoConfig&);

GEB_INSTANTIATE_ALIGN(float)
GEB_INSTANTIATE_ALIGN(double)

#undef GEB_INSTANTIATE_ALIGN

}  // namespace geb::align
