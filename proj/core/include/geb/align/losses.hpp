#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "geb/model/config.hpp"
#include "geb/model/params.hpp"
#include "geb/ndops/tape.hpp"

namespace geb::align {

using model::ModelConfig;
using model::ModelParams;
using model::ParamVars;
using nd::TokenId;

struct SftExample {
    std::vector<TokenId> prompt;
    std::vector<TokenId> response;  // non-empty

    void validate(const ModelConfig& cfg) const;
};

struct PreferencePair {
    std::vector<TokenId> prompt;
    std::vector<TokenId> chosen;
    std::vector<TokenId> rejected;

    void validate(const ModelConfig& cfg) const;
};

struct DpoConfig {
    double beta = 0.1;

    void validate() const;
};

// Negative log-likelihood of `response` given `prompt`, summed over response
// tokens. The first token of the whole sequence has no context and is not
// scored, so an empty prompt scores response[1..].
template <typename T>
nd::Var<T> response_nll(nd::Tape<T>& tape, const ParamVars<T>& vars, const std::vector<TokenId>& prompt,
                        const std::vector<TokenId>& response, const ModelConfig& cfg);

// Mean next-token cross-entropy over response positions only.
template <typename T>
nd::Var<T> sft_loss(nd::Tape<T>& tape, const ParamVars<T>& vars, const SftExample& ex, const ModelConfig& cfg);

template <typename T>
T sft_loss(const SftExample& ex, const ModelParams<T>& params, const ModelConfig& cfg);

// -log sigmoid(beta * [(lp(c) - lp_ref(c)) - (lp(r) - lp_ref(r))]).
// `reference` is evaluated off-tape, so it never receives gradients.
template <typename T>
nd::Var<T> dpo_loss(nd::Tape<T>& tape, const ParamVars<T>& policy, const ModelParams<T>& reference,
                    const PreferencePair& pair, const ModelConfig& cfg, const DpoConfig& dpo);

template <typename T>
T dpo_loss(const PreferencePair& pair, const ModelParams<T>& policy, const ModelParams<T>& reference,
           const ModelConfig& cfg, const DpoConfig& dpo);

using Tokenizer = std::function<std::vector<TokenId>(const std::string&)>;

// JSONL with {"prompt", "response"} per line.
std::vector<SftExample> load_sft_jsonl(const std::filesystem::path& path, const Tokenizer& tokenize);
// JSONL with {"prompt", "chosen", "rejected"} per line.
std::vector<PreferencePair> load_dpo_jsonl(const std::filesystem::path& path, const Tokenizer& tokenize);

struct FinetuneConfig {
    std::size_t steps = 10;
    double lr = 1e-4;
    double weight_decay = 0.0;
};

// One example per step, cycling in order; constant learning rate AdamW.
// Returns the loss of every step.
std::vector<double> finetune_sft(ModelParams<float>& params, const ModelConfig& cfg,
                                 const std::vector<SftExample>& data, const FinetuneConfig& ft);

// The reference policy is a frozen copy of `params` taken on entry.
std::vector<double> finetune_dpo(ModelParams<float>& params, const ModelConfig& cfg,
                                 const std::vector<PreferencePair>& data, const DpoConfig& dpo,
                                 const FinetuneConfig& ft);

}  // namespace geb::align
