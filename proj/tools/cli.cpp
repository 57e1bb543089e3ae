#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "geb/align/losses.hpp"
#include "geb/corpus/pipeline.hpp"
#include "geb/errors.hpp"
#include "geb/infer/benchmark.hpp"
#include "geb/infer/engine.hpp"
#include "geb/infer/sampler.hpp"
#include "geb/model/checkpoint.hpp"
#include "geb/model/params.hpp"
#include "geb/tok/bpe.hpp"
#include "geb/train/trainer.hpp"
#include "geb/util/kv_config.hpp"
#include "manifest.hpp"

namespace geb::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 1;
    std::string out = "geb_run";
};

void add_common(CLI::App& app, Common& c) {
    app.add_option("--config", c.config, "key = value config file");
    app.add_option("--seed", c.seed, "random seed (overrides the config)");
    app.add_option("--threads", c.threads, "worker thread cap")->check(CLI::PositiveNumber);
    app.add_option("--out", c.out, "output directory")->capture_default_str();
}

util::KvDoc load_config(const Common& c) {
    if (c.config.empty()) return {};
    if (!fs::exists(c.config)) throw IoError("config file not found: " + c.config);
    return util::KvDoc::load(c.config);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// A .jsonl file yields the "text" field of every line; any other file is one text.
std::vector<std::string> read_texts(const fs::path& path) {
    if (path.extension() != ".jsonl") return {read_file(path)};
    std::vector<std::string> out;
    for (auto& doc : corpus::read_shard(path).docs) out.push_back(std::move(doc.text));
    return out;
}

tok::Vocab load_vocab(const std::string& path) { return path.empty() ? tok::Vocab() : tok::Vocab::load(path); }

std::vector<nd::TokenId> encode_all(const std::vector<std::string>& texts, const tok::Vocab& vocab) {
    std::vector<nd::TokenId> ids;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto part = tok::encode(i + 1 < texts.size() ? texts[i] + "\n" : texts[i], vocab);
        ids.insert(ids.end(), part.begin(), part.end());
    }
    return ids;
}

void check_vocab_fits(const tok::Vocab& vocab, const model::ModelConfig& cfg) {
    if (vocab.size() > cfg.vocab_size) {
        throw ConfigError("tokenizer has " + std::to_string(vocab.size()) + " entries but the model vocabulary is " +
                          std::to_string(cfg.vocab_size));
    }
}

// Accepts both plain model checkpoints and training checkpoints.
std::pair<model::ModelConfig, model::ModelParams<float>> load_any_model(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("model checkpoint not found: " + path.string());
    const model::Checkpoint ck = model::read_checkpoint(path);
    if (ck.config.contains("model.vocab_size")) {
        const auto cfg = model::ModelConfig::from_kv(ck.config.section("model."));
        return {cfg, model::extract_params(ck, cfg)};
    }
    const auto cfg = model::ModelConfig::from_kv(ck.config);
    return {cfg, model::extract_params(ck, cfg)};
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

void write_losses(const fs::path& path, const std::vector<double>& losses) {
    std::string text = "step,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i) {
        text += std::to_string(i) + "," + util::format_double(losses[i]) + "\n";
    }
    write_text(path, text);
}

RunManifest start_manifest(const std::string& command, const Common& c) {
    RunManifest m;
    m.command = command;
    m.out_dir = c.out;
    m.threads = c.threads;
    m.seed = c.seed.value_or(0);
    m.started_at = utc_timestamp();
    fs::create_directories(m.out_dir);
    return m;
}

// ---- subcommands ------------------------------------------------------------

struct PrepareArgs {
    Common common;
    std::vector<std::string> inputs;
    std::vector<std::string> references;
};

void run_prepare(const PrepareArgs& a, RunManifest& m, std::ostream& out) {
    const util::KvDoc doc = load_config(a.common);
    const corpus::PipelineConfig cfg = corpus::PipelineConfig::from_kv(doc);
    m.config = cfg.to_kv();
    m.inputs = a.inputs;

    // Every shard is read before anything is written.
    std::vector<corpus::Shard> shards;
    std::set<std::string> names;
    for (const auto& p : a.inputs) {
        shards.push_back(corpus::read_shard(p));
        if (!names.insert(shards.back().name).second) {
            throw ArgumentError("two input shards share the name '" + shards.back().name + "'");
        }
        if (shards.back().name == "rejected") throw ArgumentError("input shard may not be named 'rejected'");
    }
    std::optional<corpus::NgramModel> lm;
    if (!a.references.empty()) {
        std::vector<std::string> texts;
        for (const auto& r : a.references) {
            m.inputs.push_back(r);
            for (auto& t : read_texts(r)) texts.push_back(std::move(t));
        }
        lm = corpus::train_ngram(texts, cfg.ngram_order, cfg.ngram_lambda, cfg.ngram_k, cfg.terminal_punct);
    }
    const corpus::PipelineResult result = corpus::pipeline_run(std::move(shards), cfg, lm ? &*lm : nullptr);

    for (const auto& s : result.shards) {
        corpus::write_shard(m.out_dir / (s.name + ".jsonl"), s.docs);
        m.outputs.push_back(s.name + ".jsonl");
    }
    corpus::write_rejected(m.out_dir / "rejected.jsonl", result.rejected);
    write_text(m.out_dir / "report.json", corpus::report_json(result));
    m.outputs.push_back("rejected.jsonl");
    m.outputs.push_back("report.json");
    for (const auto& r : result.report) {
        out << r.stage << ": " << r.input << " -> " << r.output << " " << r.unit << (r.skipped ? " (skipped)" : "")
            << '\n';
    }
}

struct TokenizerArgs {
    Common common;
    std::vector<std::string> inputs;
    std::optional<std::size_t> vocab_size;
};

void run_train_tokenizer(const TokenizerArgs& a, RunManifest& m, std::ostream& out) {
    const util::KvDoc doc = load_config(a.common);
    const std::size_t target = a.vocab_size.value_or(doc.get_uint("vocab_size", 512));
    std::vector<std::string> texts;
    for (const auto& p : a.inputs) {
        for (auto& t : read_texts(p)) texts.push_back(std::move(t));
    }
    const tok::Vocab vocab = tok::bpe_train(texts, target);
    vocab.save(m.out_dir / "vocab.bpe");
    m.inputs = a.inputs;
    m.config.set("vocab_size", static_cast<std::uint64_t>(target));
    m.outputs.push_back("vocab.bpe");
    out << "vocab entries: " << vocab.size() << " (merges " << vocab.merges().size() << ")\n";
}

struct TrainArgs {
    Common common;
    std::string corpus;
    std::string vocab;
    std::optional<std::size_t> steps;
    std::optional<std::string> strategies;
    std::optional<std::size_t> poison;
};

void run_train(const TrainArgs& a, RunManifest& m, std::ostream& out) {
    util::KvDoc doc = load_config(a.common);
    if (a.steps) {
        doc.set("train.steps", static_cast<std::uint64_t>(*a.steps));
    }
    if (a.common.seed) doc.set("train.seed", *a.common.seed);
    if (a.strategies) doc.set("spike.strategies", *a.strategies);
    if (a.poison) doc.set("train.poison_iteration", static_cast<std::uint64_t>(*a.poison));
    train::TrainConfig cfg = train::TrainConfig::from_kv(doc);
    cfg.out_dir = m.out_dir;
    m.config = cfg.to_kv();
    if (!a.vocab.empty()) m.config.set("tokenizer", a.vocab);
    m.seed = cfg.seed;
    m.inputs = {a.corpus};

    const tok::Vocab vocab = load_vocab(a.vocab);
    check_vocab_fits(vocab, cfg.model);
    const auto tokens = encode_all(read_texts(a.corpus), vocab);
    const train::TrainResult result = train::train_loop(cfg, tokens);
    model::save_model(m.out_dir / "model.ckpt", cfg.model, result.state.params);
    m.outputs = {"loss_curve.csv", "actions.csv", "final.ckpt", "model.ckpt"};
    if (cfg.checkpoint_every != 0) {
        for (std::size_t s = cfg.checkpoint_every; s <= result.state.step(); s += cfg.checkpoint_every) {
            m.outputs.push_back("step_" + std::to_string(s) + ".ckpt");
        }
    }
    out << "optimizer steps: " << result.state.step() << ", iterations: " << result.state.cursor << '\n';
    if (!result.curve.empty()) {
        out << "loss: first " << util::format_double(result.curve.front().loss) << ", last "
            << util::format_double(result.curve.back().loss) << '\n';
    }
    if (result.stopped_early) out << "corpus exhausted before the requested steps; state saved\n";
}

struct AlignArgs {
    Common common;
    std::string model;
    std::string data;
    std::string vocab;
    std::size_t steps = 10;
    double lr = 1e-4;
    double beta = 0.1;
};

void run_align(const AlignArgs& a, bool dpo, RunManifest& m, std::ostream& out) {
    const util::KvDoc doc = load_config(a.common);
    auto [cfg, params] = load_any_model(a.model);
    const tok::Vocab vocab = load_vocab(a.vocab);
    check_vocab_fits(vocab, cfg);
    const align::Tokenizer tokenize = [&](const std::string& s) { return tok::encode(s, vocab); };
    align::FinetuneConfig ft;
    ft.steps = doc.contains("steps") ? doc.get_uint("steps", a.steps) : a.steps;
    ft.lr = doc.get_double("lr", a.lr);
    ft.weight_decay = doc.get_double("weight_decay", ft.weight_decay);
    m.inputs = {a.model, a.data};
    m.config.set("steps", static_cast<std::uint64_t>(ft.steps));
    m.config.set("lr", ft.lr);
    m.config.set("weight_decay", ft.weight_decay);
    if (!a.vocab.empty()) m.config.set("tokenizer", a.vocab);

    std::vector<double> losses;
    if (dpo) {
        align::DpoConfig dc;
        dc.beta = doc.get_double("beta", a.beta);
        m.config.set("beta", dc.beta);
        losses = align::finetune_dpo(params, cfg, align::load_dpo_jsonl(a.data, tokenize), dc, ft);
    } else {
        losses = align::finetune_sft(params, cfg, align::load_sft_jsonl(a.data, tokenize), ft);
    }
    model::save_model(m.out_dir / "model.ckpt", cfg, params);
    write_losses(m.out_dir / "losses.csv", losses);
    m.outputs = {"model.ckpt", "losses.csv"};
    if (!losses.empty()) {
        out << "loss: first " << util::format_double(losses.front()) << ", last "
            << util::format_double(losses.back()) << '\n';
    }
}

struct GenerateArgs {
    Common common;
    std::string model;
    std::string vocab;
    std::string prompt;
    std::size_t max_new = 32;
    std::string sampling = "greedy";
    std::size_t top_k = 1;
    double temperature = 1.0;
};

void run_generate(const GenerateArgs& a, RunManifest& m, std::ostream& out) {
    auto [cfg, params] = load_any_model(a.model);
    const tok::Vocab vocab = load_vocab(a.vocab);
    check_vocab_fits(vocab, cfg);
    infer::SamplerConfig sc;
    sc.mode = infer::sampling_mode_from_string(a.sampling);
    sc.k = a.top_k;
    sc.temperature = a.temperature;
    sc.seed = a.common.seed.value_or(0);
    sc.validate();
    std::vector<nd::TokenId> prompt = tok::encode(a.prompt, vocab);
    if (prompt.empty()) prompt.push_back(tok::kBos);
    infer::Engine engine(params, cfg, a.common.threads);
    infer::Sampler sampler(sc);
    const auto ids = infer::generate(engine, prompt, a.max_new, sampler, tok::kEos);
    const std::string text = tok::decode(ids, vocab);
    write_text(m.out_dir / "generation.txt", text);
    m.inputs = {a.model};
    m.config.set("prompt", a.prompt);
    m.config.set("max_new", static_cast<std::uint64_t>(a.max_new));
    m.config.set("sampling", a.sampling);
    m.config.set("top_k", static_cast<std::uint64_t>(a.top_k));
    m.config.set("temperature", a.temperature);
    m.outputs = {"generation.txt"};
    out << text << '\n';
}

struct BenchArgs {
    Common common;
    std::string model;
    std::size_t prompt_len = 16;
    std::size_t gen_len = 32;
    std::size_t repeats = 5;
    bool compare_mha = false;
};

void run_bench(const BenchArgs& a, RunManifest& m, std::ostream& out) {
    model::ModelConfig cfg;
    model::ModelParams<float> params;
    const std::uint64_t seed = a.common.seed.value_or(0);
    if (!a.model.empty()) {
        std::tie(cfg, params) = load_any_model(a.model);
        m.inputs = {a.model};
    } else {
        if (a.common.config.empty()) throw ArgumentError("bench needs --model or --config (a model config)");
        cfg = model::ModelConfig::from_kv(load_config(a.common));
        params = model::init_params<float>(cfg, seed);
    }
    m.config = cfg.to_kv();
    infer::BenchmarkOptions opts;
    opts.prompt_len = a.prompt_len;
    opts.gen_len = a.gen_len;
    opts.repeats = a.repeats;
    opts.threads = a.common.threads;
    opts.seed = seed;
    opts.label = "gqa";
    m.config.set("bench.prompt_len", static_cast<std::uint64_t>(a.prompt_len));
    m.config.set("bench.gen_len", static_cast<std::uint64_t>(a.gen_len));
    m.config.set("bench.repeats", static_cast<std::uint64_t>(a.repeats));
    m.config.set("bench.compare_mha", a.compare_mha);

    std::string report;
    if (a.compare_mha && cfg.kv_groups != cfg.n_heads) {
        model::ModelConfig mha = cfg;
        mha.kv_groups = cfg.n_heads;
        const auto mha_params = model::init_params<float>(mha, seed);
        infer::BenchmarkOptions mha_opts = opts;
        mha_opts.label = "mha";
        const auto [g, h] = infer::benchmark_pair(params, cfg, mha_params, mha, opts, mha_opts);
        report = infer::format_report(g) + infer::format_report(h);
    } else {
        report = infer::format_report(infer::benchmark_throughput(params, cfg, opts));
    }
    write_text(m.out_dir / "bench_report.txt", report);
    m.outputs = {"bench_report.txt"};
    out << report;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"geb: data preparation, tokenizer, training, alignment and inference for the GEB model family", "geb"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);

    PrepareArgs prep;
    auto* c_prep = app.add_subcommand("prepare-data", "clean, filter and deduplicate JSONL shards");
    add_common(*c_prep, prep.common);
    c_prep->add_option("--input", prep.inputs, "input shard (JSONL with id, text, source); repeatable")->required();
    c_prep->add_option("--reference", prep.references, "reference corpus for the perplexity model; repeatable");

    TokenizerArgs tk;
    auto* c_tok = app.add_subcommand("train-tokenizer", "train a byte-level BPE vocabulary");
    add_common(*c_tok, tk.common);
    c_tok->add_option("--input", tk.inputs, "training text (.jsonl uses the text field); repeatable")->required();
    c_tok->add_option("--vocab-size", tk.vocab_size, "target vocabulary size including specials and bytes");

    TrainArgs tr;
    auto* c_train = app.add_subcommand("train", "pretrain with loss-spike mitigation");
    add_common(*c_train, tr.common);
    c_train->get_option("--config")->required();
    c_train->add_option("--corpus", tr.corpus, "training text (.jsonl uses the text field)")->required();
    c_train->add_option("--vocab", tr.vocab, "BPE vocabulary file (default: byte level)");
    c_train->add_option("--steps", tr.steps, "optimizer steps");
    c_train->add_option("--spike-strategies", tr.strategies, "subset of replace,skip,egs,lr, or none");
    c_train->add_option("--poison-iteration", tr.poison, "fault injection: shuffle labels of this batch");

    AlignArgs sft;
    auto* c_sft = app.add_subcommand("sft", "supervised fine-tuning on prompt/response JSONL");
    add_common(*c_sft, sft.common);
    c_sft->add_option("--model", sft.model, "model checkpoint")->required();
    c_sft->add_option("--data", sft.data, "JSONL with prompt and response")->required();
    c_sft->add_option("--vocab", sft.vocab, "BPE vocabulary file (default: byte level)");
    c_sft->add_option("--steps", sft.steps, "optimizer steps")->capture_default_str();
    c_sft->add_option("--lr", sft.lr, "learning rate")->capture_default_str();

    AlignArgs dpo;
    auto* c_dpo = app.add_subcommand("dpo", "direct preference optimization on prompt/chosen/rejected JSONL");
    add_common(*c_dpo, dpo.common);
    c_dpo->add_option("--model", dpo.model, "model checkpoint (also the frozen reference)")->required();
    c_dpo->add_option("--data", dpo.data, "JSONL with prompt, chosen and rejected")->required();
    c_dpo->add_option("--vocab", dpo.vocab, "BPE vocabulary file (default: byte level)");
    c_dpo->add_option("--steps", dpo.steps, "optimizer steps")->capture_default_str();
    c_dpo->add_option("--lr", dpo.lr, "learning rate")->capture_default_str();
    c_dpo->add_option("--beta", dpo.beta, "preference temperature")->capture_default_str();

    GenerateArgs gen;
    auto* c_gen = app.add_subcommand("generate", "sample a continuation with the KV-cache engine");
    add_common(*c_gen, gen.common);
    c_gen->add_option("--model", gen.model, "model checkpoint")->required();
    c_gen->add_option("--vocab", gen.vocab, "BPE vocabulary file (default: byte level)");
    c_gen->add_option("--prompt", gen.prompt, "prompt text");
    c_gen->add_option("--max-new", gen.max_new, "tokens to generate")->capture_default_str();
    c_gen->add_option("--sampling", gen.sampling, "greedy or top_k")->capture_default_str();
    c_gen->add_option("--top-k", gen.top_k, "k for top_k sampling")->capture_default_str();
    c_gen->add_option("--temperature", gen.temperature, "sampling temperature")->capture_default_str();

    BenchArgs bench;
    auto* c_bench = app.add_subcommand("bench", "decode throughput benchmark");
    add_common(*c_bench, bench.common);
    c_bench->add_option("--model", bench.model, "model checkpoint (else --config gives a model config)");
    c_bench->add_option("--prompt-len", bench.prompt_len, "prompt tokens")->capture_default_str();
    c_bench->add_option("--gen-len", bench.gen_len, "generated tokens per repeat")->check(CLI::PositiveNumber)->capture_default_str();
    c_bench->add_option("--repeats", bench.repeats, "timed repeats")->check(CLI::PositiveNumber)->capture_default_str();
    c_bench->add_flag("--compare-mha", bench.compare_mha, "also time the kv_groups == n_heads variant, interleaved");

    try {
        // CLI11 consumes arguments from the back.
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e, out, err);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e, err, err);
        return kExitUsage;
    }

    CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    const Common* common = nullptr;
    if (cmd == c_prep) common = &prep.common;
    if (cmd == c_tok) common = &tk.common;
    if (cmd == c_train) common = &tr.common;
    if (cmd == c_sft) common = &sft.common;
    if (cmd == c_dpo) common = &dpo.common;
    if (cmd == c_gen) common = &gen.common;
    if (cmd == c_bench) common = &bench.common;

    std::optional<RunManifest> manifest;
    try {
        manifest = start_manifest(name, *common);
        if (cmd == c_prep) run_prepare(prep, *manifest, out);
        if (cmd == c_tok) run_train_tokenizer(tk, *manifest, out);
        if (cmd == c_train) run_train(tr, *manifest, out);
        if (cmd == c_sft) run_align(sft, false, *manifest, out);
        if (cmd == c_dpo) run_align(dpo, true, *manifest, out);
        if (cmd == c_gen) run_generate(gen, *manifest, out);
        if (cmd == c_bench) run_bench(bench, *manifest, out);
        manifest->finished_at = utc_timestamp();
        manifest->write();
        out << "manifest: " << (manifest->out_dir / "run_manifest.json").string() << '\n';
        return kExitOk;
    } catch (const std::exception& e) {
        err << "geb " << name << ": " << e.what() << '\n';
        if (manifest) {
            try {
                manifest->status = "failed";
                manifest->error = e.what();
                manifest->finished_at = utc_timestamp();
                manifest->write();
            } catch (const std::exception&) {
                // The original error is the one worth reporting.
            }
        }
        return kExitFailure;
    }
}

}  // namespace geb::cli
