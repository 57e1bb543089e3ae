// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "geb/align/losses.hpp"
#include "geb/corpus/pipeline.hpp"
#include "geb/infer/benchmark.hpp"
#include "geb/infer/engine.hpp"
#include "geb/model/transformer.hpp"
#include "geb/tok/bpe.hpp"
#include "geb/train/trainer.hpp"
#include "support.hpp"

using namespace geb;
using model::ModelConfig;
using model::ModelParams;
using nd::TensorD;
using nd::TokenId;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

// Collects the checks of one criterion; the first failing check is reported.
class Checks {
   public:
    void expect(bool ok, const std::string& what) {
        if (!ok && failure_.empty()) failure_ = what;
    }
    void note(const std::string& s) { notes_ += (notes_.empty() ? "" : ", ") + s; }
    Outcome done() const { return {failure_.empty(), failure_.empty() ? notes_ : failure_ + " | " + notes_}; }

   private:
    std::string failure_;
    std::string notes_;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::vector<double> flat(const TensorD& t) { return {t.data().begin(), t.data().end()}; }

TensorD random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    TensorD t({r, c});
    for (auto& v : t.data()) v = n(rng);
    return t;
}

std::vector<TokenId> random_ids(std::size_t n, std::size_t vocab, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<TokenId> ids(n);
    for (auto& t : ids) t = static_cast<TokenId>(rng() % vocab);
    return ids;
}

TensorD attention(const TensorD& x, const ModelParams<double>& p, const ModelConfig& cfg, std::size_t start = 0) {
    nd::Tape<double> tape(false);
    const auto vars = model::bind_params(tape, p, false);
    return model::gqa_attention(tape.constant(x), vars.layers[0], cfg, start).value();
}

// Worst relative error over all parameters, plus the count of entries whose
// analytic and numeric signs disagree where the numeric value is clear of noise.
struct GradAgreement {
    double worst = 0.0;
    std::size_t sign_flips = 0;
    std::size_t tensors = 0;
};

GradAgreement compare_gradients(const nd::GradMap<double>& analytic, const nd::GradMap<double>& numeric) {
    GradAgreement g;
    for (const auto& [name, n] : numeric) {
        const auto it = analytic.find(name);
        const std::vector<double> a = it == analytic.end() ? std::vector<double>(n.numel(), 0.0) : flat(it->second);
        const std::vector<double> nv = flat(n);
        g.worst = std::max(g.worst, testutil::relative_error(a, nv));
        for (std::size_t i = 0; i < nv.size(); ++i) {
            if (std::abs(nv[i]) > 1e-6 && (a[i] > 0) != (nv[i] > 0)) ++g.sign_flips;
        }
        ++g.tensors;
    }
    return g;
}

const std::vector<TokenId>& drill_corpus() {
    static const std::vector<TokenId> ids = testutil::byte_ids(testutil::synthetic_text(100'000, 1));
    return ids;
}

// ---------------------------------------------------------------------------

Outcome architecture_arithmetic() {
    Checks c;
    const ModelConfig cfg = ModelConfig::geb_1_3b();
    // Independent oracle: every tensor shape of the untied, bias-free model.
    const std::uint64_t V = 64896, H = 2048, F = 5632, heads = 16, L = 24, G = 4;
    const std::uint64_t kv = G * (H / heads);
    const std::uint64_t per_layer = H * H + 2 * H * kv + H * H + 3 * H * F + 2 * H;
    const std::uint64_t oracle = V * H + L * per_layer + H + H * V;
    const std::uint64_t n = model::param_count(cfg);
    c.expect(oracle == 1'348'044'800ull, "oracle != 1348044800");
    c.expect(n == oracle, "param_count != oracle");
    c.expect(n >= 1.30e9 && n <= 1.40e9, "param_count outside [1.30e9, 1.40e9]");
    c.note("param_count=" + std::to_string(n));
    c.note("oracle=" + std::to_string(oracle));
    return c.done();
}

Outcome gradient_fidelity() {
    Checks c;
    ModelConfig cfg = testutil::toy_config();  // vocab 64, hidden 16, 2 layers
    const auto params = testutil::gradcheck_params(cfg, 2);
    const std::vector<TokenId> ids = {3, 17, 42, 8, 63, 21, 5};
    const std::vector<TokenId> inputs(ids.begin(), ids.end() - 1), targets(ids.begin() + 1, ids.end());
    const std::vector<double> w(targets.size(), 1.0);
    const auto mean_ce = [&](const ModelParams<double>& p, nd::Tape<double>& tape) {
        const auto vars = model::bind_params(tape, p, tape.recording());
        const auto logits = model::model_forward(tape, std::span<const TokenId>(inputs), vars, cfg);
        return nd::cross_entropy(logits, std::span<const TokenId>(targets), std::span<const double>(w),
                                 nd::Reduction::Mean);
    };
    nd::Tape<double> tape;
    const auto analytic = tape.backward(mean_ce(params, tape));
    const auto numeric = testutil::numeric_gradients(params, [&](const ModelParams<double>& p) {
        nd::Tape<double> t(false);
        return mean_ce(p, t).value().item();
    });
    const GradAgreement g = compare_gradients(analytic, numeric);
    c.expect(g.tensors == ModelParams<double>(params).named().size(), "not every parameter was checked");
    c.expect(analytic.size() == g.tensors, "analytic gradient missing for some parameter");
    c.expect(g.worst < 1e-3, "relative error >= 1e-3");
    c.note("tensors=" + std::to_string(g.tensors));
    c.note("worst_rel_err=" + fmt(g.worst));
    return c.done();
}

Outcome gqa_correctness() {
    Checks c;
    ModelConfig cfg = testutil::toy_config();
    cfg.hidden_size = 64;
    cfg.n_heads = 16;
    cfg.kv_groups = 16;
    cfg.validate();
    const TensorD x = random_matrix(6, cfg.hidden_size, 31);
    const auto mha = model::init_params<double>(cfg, 32);
    const double mha_err = testutil::max_abs_diff(attention(x, mha, cfg),
                                                  testutil::reference_attention(x, mha.layers[0], cfg));
    ModelConfig gqa = cfg;
    gqa.kv_groups = 4;
    const auto gp = model::init_params<double>(gqa, 33);
    const double gqa_err = testutil::max_abs_diff(attention(x, gp, gqa),
                                                  testutil::reference_attention(x, gp.layers[0], gqa));
    // A GQA model whose groups are copied out to every head is the MHA model.
    ModelParams<double> expanded = model::init_params<double>(cfg, 34);
    expanded.layers[0] = mha.layers[0];
    const std::size_t hd = gqa.head_dim();
    for (std::size_t r = 0; r < gqa.hidden_size; ++r) {
        for (std::size_t h = 0; h < gqa.n_heads; ++h) {
            for (std::size_t d = 0; d < hd; ++d) {
                const std::size_t src = (h / gqa.group_size()) * hd + d;
                expanded.layers[0].wk.at(r, h * hd + d) = gp.layers[0].wk.at(r, src);
                expanded.layers[0].wv.at(r, h * hd + d) = gp.layers[0].wv.at(r, src);
            }
        }
    }
    expanded.layers[0].wq = gp.layers[0].wq;
    expanded.layers[0].wo = gp.layers[0].wo;
    const double expand_err = testutil::max_abs_diff(attention(x, gp, gqa), attention(x, expanded, cfg));

    const infer::KVCache a(gqa), b(cfg);
    const double ratio = static_cast<double>(a.reserved_bytes()) / static_cast<double>(b.reserved_bytes());
    c.expect(mha_err < 1e-6, "kv_groups == n_heads differs from MHA reference by >= 1e-6");
    c.expect(expand_err < 1e-6, "GQA differs from its head-expanded MHA by >= 1e-6");
    c.expect(gqa_err < 1e-5, "GQA 4/16 differs from loop reference by >= 1e-5");
    c.expect(ratio == 0.25, "cache bytes ratio != 0.25");
    c.note("mha_err=" + fmt(mha_err));
    c.note("expanded_err=" + fmt(expand_err));
    c.note("gqa_err=" + fmt(gqa_err));
    c.note("cache_ratio=" + fmt(ratio));
    return c.done();
}

Outcome rope_identities() {
    Checks c;
    const TensorD x = random_matrix(1, 8, 41);
    const std::vector<std::size_t> zero = {0};
    c.expect(model::apply_rope(x, zero, 10000.0) == x, "position 0 is not the identity");
    const nd::TensorF xf = x.cast<float>();
    c.expect(model::apply_rope(xf, zero, 10000.0) == xf, "position 0 is not the identity in float");

    const TensorD q = random_matrix(1, 8, 42), k = random_matrix(1, 8, 43);
    const auto score = [&](std::size_t m, std::size_t n) {
        const std::vector<std::size_t> pm = {m}, pn = {n};
        const TensorD a = model::apply_rope(q, pm, 10000.0), b = model::apply_rope(k, pn, 10000.0);
        double s = 0.0;
        for (std::size_t i = 0; i < 8; ++i) s += a[i] * b[i];
        return s;
    };
    double offset_err = 0.0;
    for (std::size_t shift : {1u, 17u, 1000u, 4000u}) offset_err = std::max(offset_err, std::abs(score(9, 3) - score(9 + shift, 3 + shift)));

    const ModelConfig cfg = testutil::toy_config();
    const auto p = model::init_params<double>(cfg, 44);
    const TensorD h = random_matrix(5, cfg.hidden_size, 45);
    const double shift_err = testutil::max_abs_diff(attention(h, p, cfg, 0), attention(h, p, cfg, 37));
    c.expect(offset_err < 1e-5, "Q.K score depends on absolute position");
    c.expect(shift_err < 1e-5, "global position shift changes attention output");
    c.note("offset_err=" + fmt(offset_err));
    c.note("shift_err=" + fmt(shift_err));
    return c.done();
}

Outcome cache_equivalence() {
    Checks c;
    const ModelConfig cfg = testutil::toy_config();
    const auto p = model::init_params<float>(cfg, 51);
    std::vector<TokenId> ids = random_ids(4, cfg.vocab_size, 52);
    auto res = infer::prefill(ids, p, cfg);
    double worst = 0.0;
    for (TokenId t : random_ids(32, cfg.vocab_size, 53)) {
        const auto logits = infer::decode_step(t, res.cache, p, cfg);
        ids.push_back(t);
        const auto full = model::model_forward(std::span<const TokenId>(ids), p, cfg);
        for (std::size_t v = 0; v < logits.size(); ++v) {
            worst = std::max(worst, std::abs(double(logits[v]) - double(full.at(ids.size() - 1, v))));
        }
    }
    c.expect(worst < 1e-5, "incremental decode differs from full forward by >= 1e-5");
    c.note("steps=32");
    c.note("max_abs_diff=" + fmt(worst));
    return c.done();
}

Outcome schedule_endpoints() {
    Checks c;
    const train::OptimizerConfig opt = train::OptimizerConfig::for_steps(10000);
    const double at_warmup = train::cosine_lr(opt.warmup_steps, opt);
    const double at_end = train::cosine_lr(opt.total_steps, opt);
    const double mid = train::cosine_lr((opt.warmup_steps + opt.total_steps) / 2, opt);
    c.expect(at_warmup == 4e-4, "lr at warmup end != 4e-4");
    c.expect(at_end == 4e-5, "lr at total_steps != 4e-5");
    c.expect(std::abs(mid - 2.2e-4) <= 1e-12, "midpoint lr not within 1e-12 of 2.2e-4");
    c.note("warmup_end=" + fmt(at_warmup));
    c.note("end=" + fmt(at_end));
    c.note("mid=" + fmt(mid));
    return c.done();
}

double max_post_spike_smoothed(const train::TrainResult& r, std::size_t spike) {
    const auto smooth = train::smoothed_losses(r.curve, 10);
    double m = -INFINITY;
    for (std::size_t i = 0; i < r.curve.size(); ++i) {
        if (r.curve[i].step >= spike) m = std::max(m, smooth[i]);
    }
    return m;
}

Outcome spike_drill() {
    Checks c;
    constexpr std::size_t kPoison = 210;
    train::TrainConfig on = testutil::drill_config(300);
    on.poison_iteration = kPoison;
    train::TrainConfig off = on;
    off.spike.strategy_order.clear();
    const train::TrainResult with = train::train_loop(on, drill_corpus());
    const train::TrainResult without = train::train_loop(off, drill_corpus());

    // (a) detection
    const auto spike = std::find_if(with.actions.begin(), with.actions.end(),
                                    [](const train::ActionRecord& a) { return a.action == "spike"; });
    const bool detected = spike != with.actions.end();
    const std::size_t at = detected ? spike->iteration : 0;
    c.expect(detected && at >= kPoison && at <= kPoison + 1, "(a) detector did not fire within 1 step");

    // (b) post-spike smoothed maximum
    const double max_on = max_post_spike_smoothed(with, kPoison);
    const double max_off = max_post_spike_smoothed(without, kPoison);
    c.expect(max_on < max_off, "(b) strategies did not lower the post-spike smoothed maximum");

    // (c) EGS touches only the embedding gradient
    const auto params = model::init_params<float>(on.model, 61);
    const auto plan = train::make_data_plan(drill_corpus(), on.batch_size, on.seq_len, on.seed, on.reserve_fraction);
    const train::BatchEval eval = train::evaluate_batch(params, on.model, plan.train.front());
    auto scaled = eval.grads;
    train::egs_scale(scaled, on.spike.egs_alpha);
    bool others_bitwise = true;
    bool embedding_changed = false;
    for (const auto& [name, g] : eval.grads) {
        if (name == "tok_embedding") {
            embedding_changed = !(scaled.at(name) == g);
        } else {
            others_bitwise = others_bitwise && scaled.at(name) == g;
        }
    }
    c.expect(others_bitwise, "(c) EGS altered a non-embedding gradient");
    c.expect(embedding_changed, "(c) EGS left the embedding gradient unchanged");

    // (d) skip window
    const auto& skip = with.state.controls.skip_set;
    const bool window_ok = detected && at >= 200 && skip.size() == 401 && *skip.begin() == at - 200 &&
                           *skip.rbegin() == at + 200;
    c.expect(window_ok, "(d) skip_set is not exactly [spike-200, spike+200]");

    c.note("detected_at=" + (detected ? std::to_string(at) : std::string("none")));
    c.note("max_smoothed_on=" + fmt(max_on));
    c.note("max_smoothed_off=" + fmt(max_off));
    c.note("skip=[" + (skip.empty() ? std::string() : std::to_string(*skip.begin()) + "," +
                                                          std::to_string(*skip.rbegin())) + "]");
    return c.done();
}

Outcome training_sanity() {
    Checks c;
    const train::TrainConfig cfg = testutil::drill_config(300);
    const train::TrainResult r = train::train_loop(cfg, drill_corpus());
    const auto smooth = train::smoothed_losses(r.curve, 10);
    const double initial = smooth.size() > 9 ? smooth[9] : NAN;
    const double final_loss = smooth.empty() ? NAN : smooth.back();
    c.expect(r.curve.size() == 300, "run did not reach 300 steps");
    c.expect(final_loss < 0.8 * initial, "final smoothed loss not below 0.8x initial");

    testutil::TempDir dir("acceptance_resume");
    train::Trainer straight(cfg, drill_corpus());
    straight.run_until(150);
    train::Trainer first(cfg, drill_corpus());
    first.run_until(100);
    first.save_checkpoint(dir / "mid.ckpt");
    train::Trainer resumed(cfg, drill_corpus(), train::Trainer::load_checkpoint(dir / "mid.ckpt", cfg));
    resumed.run_until(150);
    const bool identical = resumed.state().params == straight.state().params &&
                           resumed.state().adam.m == straight.state().adam.m &&
                           resumed.state().adam.v == straight.state().adam.v &&
                           resumed.state().cursor == straight.state().cursor;
    c.expect(identical, "resumed run is not bit-identical");
    c.note("corpus_bytes=" + std::to_string(drill_corpus().size()));
    c.note("initial=" + fmt(initial));
    c.note("final=" + fmt(final_loss));
    c.note("resume_bitwise=" + std::string(identical ? "yes" : "no"));
    return c.done();
}

Outcome alignment_losses() {
    Checks c;
    ModelConfig cfg = testutil::toy_config();
    cfg.vocab_size = 16;
    cfg.ffn_size = 24;
    const align::PreferencePair pair{{1, 2}, {3, 4, 5}, {6, 7}};
    const align::SftExample ex{{1, 2}, {9, 3, 11}};

    const auto base = model::init_params<double>(cfg, 71);
    const double dpo_same = align::dpo_loss(pair, base, base, cfg, align::DpoConfig{});
    auto uniform = base;
    uniform.out_head = TensorD(uniform.out_head.shape());
    const double sft_uniform = align::sft_loss(ex, uniform, cfg);
    c.expect(std::abs(dpo_same - std::log(2.0)) <= 1e-6, "dpo_loss(policy == reference) != ln 2");
    c.expect(std::abs(sft_uniform - std::log(16.0)) <= 1e-6, "sft_loss under uniform logits != ln V");

    const auto policy = testutil::gradcheck_params(cfg, 72);
    const auto reference = testutil::gradcheck_params(cfg, 73);
    align::DpoConfig d;
    d.beta = 0.5;
    nd::Tape<double> ts;
    const auto sft_a = ts.backward(align::sft_loss(ts, model::bind_params(ts, policy), ex, cfg));
    const auto sft_n = testutil::numeric_gradients(
        policy, [&](const ModelParams<double>& p) { return align::sft_loss(ex, p, cfg); });
    nd::Tape<double> td;
    const auto dpo_a = td.backward(align::dpo_loss(td, model::bind_params(td, policy), reference, pair, cfg, d));
    const auto dpo_n = testutil::numeric_gradients(
        policy, [&](const ModelParams<double>& p) { return align::dpo_loss(pair, p, reference, cfg, d); });
    const GradAgreement gs = compare_gradients(sft_a, sft_n);
    const GradAgreement gd = compare_gradients(dpo_a, dpo_n);
    c.expect(gs.worst < 1e-3 && gs.sign_flips == 0, "sft gradient fails finite differences");
    c.expect(gd.worst < 1e-3 && gd.sign_flips == 0, "dpo gradient fails finite differences");
    c.note("dpo_same=" + fmt(dpo_same));
    c.note("sft_uniform=" + fmt(sft_uniform));
    c.note("sft_grad_err=" + fmt(gs.worst));
    c.note("dpo_grad_err=" + fmt(gd.worst));
    return c.done();
}

Outcome pipeline() {
    Checks c;
    const corpus::PipelineConfig cfg;
    const corpus::NgramModel ref = testutil::planted_reference(cfg);
    const auto first = corpus::pipeline_run(testutil::planted_shards(), cfg, &ref);
    std::string drops;
    bool one_each = first.report.size() == 6;
    for (const auto& s : first.report) {
        one_each = one_each && s.dropped == 1;
        drops += (drops.empty() ? "" : "/") + std::to_string(s.dropped);
    }
    c.expect(one_each, "report does not show exactly one drop per stage");

    const auto second = corpus::pipeline_run(first.shards, cfg, &ref);
    bool fixed = true;
    for (const auto& s : second.report) fixed = fixed && s.dropped == 0;
    for (std::size_t i = 0; fixed && i < first.shards.size(); ++i) {
        fixed = second.shards[i].docs.size() == first.shards[i].docs.size();
        for (std::size_t j = 0; fixed && j < first.shards[i].docs.size(); ++j) {
            fixed = second.shards[i].docs[j].text == first.shards[i].docs[j].text;
        }
    }
    c.expect(fixed, "pipeline is not idempotent on its own output");

    testutil::TempDir dir("acceptance_pipeline");
    std::vector<std::string> outputs[2];
    for (int run = 0; run < 2; ++run) {
        const auto r = corpus::pipeline_run(testutil::planted_shards(), cfg, &ref);
        for (const auto& s : r.shards) {
            corpus::write_shard(dir / "out.jsonl", s.docs);
            outputs[run].push_back(testutil::read_file(dir / "out.jsonl"));
        }
        corpus::write_rejected(dir / "rej.jsonl", r.rejected);
        outputs[run].push_back(testutil::read_file(dir / "rej.jsonl"));
        outputs[run].push_back(corpus::report_json(r));
    }
    c.expect(outputs[0] == outputs[1], "two runs produced different bytes");
    c.note("drops=" + drops);
    c.note("idempotent=" + std::string(fixed ? "yes" : "no"));
    return c.done();
}

Outcome tokenizer() {
    Checks c;
    std::istringstream in(testutil::read_file(testutil::fixture_path("tokenizer_corpus.txt")));
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    const tok::Vocab trained = tok::bpe_train(lines, 400);
    std::size_t failures = 0;
    for (const auto& l : lines) failures += tok::decode(tok::encode(l, trained), trained) == l ? 0 : 1;
    const tok::Vocab aaaa = tok::bpe_train({"aaaa"}, tok::kByteVocab + 1);
    const TokenId a = static_cast<TokenId>('a' + tok::kNumSpecial);
    const bool first_merge = aaaa.merges().size() == 1 && aaaa.merges()[0] == std::make_pair(a, a);
    bool bounded = true;
    for (std::size_t target : {261u, 300u, 400u, 1000u, 5000u}) bounded = bounded && tok::bpe_train(lines, target).size() <= target;
    c.expect(failures == 0, "round trip failed on a fixture line");
    c.expect(first_merge, "first merge of \"aaaa\" is not ('a','a')");
    c.expect(bounded, "vocab size exceeded the target");
    c.note("lines=" + std::to_string(lines.size()));
    c.note("vocab=" + std::to_string(trained.size()));
    c.note("roundtrip_failures=" + std::to_string(failures));
    return c.done();
}

Outcome benchmark_harness() {
    Checks c;
    ModelConfig cfg;
    cfg.vocab_size = 512;
    cfg.hidden_size = 256;
    cfg.ffn_size = 768;
    cfg.n_heads = 16;
    cfg.kv_groups = 4;
    cfg.n_layers = 2;
    cfg.max_seq_len = 256;
    cfg.validate();
    testutil::TempDir dir("acceptance_bench");
    cfg.to_kv().save(dir / "model.cfg");
    std::ostringstream out, err;
    const int code = cli::dispatch({"bench", "--config", (dir / "model.cfg").string(), "--prompt-len", "64",
                                    "--gen-len", "128", "--repeats", "9", "--threads", "1", "--compare-mha", "--out",
                                    (dir / "o").string()},
                                   out, err);
    c.expect(code == 0, "bench exited with " + std::to_string(code) + ": " + err.str());
    if (code != 0) return c.done();

    // The report holds one block per model, each closed by its summary line.
    std::vector<infer::ThroughputReport> reports;
    std::istringstream text(testutil::read_file(dir / "o" / "bench_report.txt"));
    std::string block;
    for (std::string line; std::getline(text, line);) {
        block += line + "\n";
        if (line.rfind("summary", 0) == 0) {
            reports.push_back(infer::parse_report(block));
            block.clear();
        }
    }
    c.expect(reports.size() == 2, "expected two parseable reports");
    if (reports.size() != 2) return c.done();
    const auto& gqa = reports[0];
    const auto& mha = reports[1];
    c.expect(gqa.kv_groups == 4 && mha.kv_groups == 16, "reports are not GQA 4/16 and MHA");
    c.expect(gqa.threads == mha.threads, "thread counts differ");
    c.expect(gqa.repeats.size() == 9 && mha.repeats.size() == 9, "repeat count mismatch");
    c.expect(gqa.median_tokens_per_sec >= mha.median_tokens_per_sec, "GQA median decode throughput below MHA");
    c.note("gqa_tok_s=" + fmt(gqa.median_tokens_per_sec));
    c.note("mha_tok_s=" + fmt(mha.median_tokens_per_sec));
    c.note("threads=" + std::to_string(gqa.threads));
    return c.done();
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "architecture arithmetic", architecture_arithmetic},
        {2, "gradient fidelity", gradient_fidelity},
        {3, "GQA correctness", gqa_correctness},
        {4, "RoPE identities", rope_identities},
        {5, "cache equivalence", cache_equivalence},
        {6, "schedule endpoints", schedule_endpoints},
        {7, "spike drill", spike_drill},
        {8, "training sanity", training_sanity},
        {9, "alignment losses", alignment_losses},
        {10, "pipeline", pipeline},
        {11, "tokenizer", tokenizer},
        {12, "benchmark harness", benchmark_harness},
    };
    int failed = 0;
    for (const auto& cr : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = cr.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << cr.id << "] " << cr.name << ": " << o.detail << " ("
                  << fmt(secs) << " s)" << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
