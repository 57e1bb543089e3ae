#include "geb/infer/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "geb/errors.hpp"
#include "geb/infer/sampler.hpp"
#include "geb/util/kv_config.hpp"

namespace geb::infer {

namespace {

using Clock = std::chrono::steady_clock;

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Run {
    Run(const ModelParams<float>& params, const ModelConfig& cfg, const BenchmarkOptions& o)
        : engine(params, cfg, o.threads), cache(cfg), opts(o) {
        if (opts.gen_len < 1) throw ArgumentError("benchmark gen_len must be at least 1");
        if (opts.prompt_len < 1) throw ArgumentError("benchmark prompt_len must be at least 1");
        if (opts.repeats < 1) throw ArgumentError("benchmark repeats must be at least 1");
        if (opts.prompt_len + opts.gen_len > cfg.max_seq_len) {
            throw LengthError("prompt_len + gen_len = " + std::to_string(opts.prompt_len + opts.gen_len) +
                              " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
        }
        std::mt19937_64 rng(opts.seed);
        prompt.resize(opts.prompt_len);
        for (auto& t : prompt) t = static_cast<TokenId>(rng() % cfg.vocab_size);
        report.label = opts.label;
        report.cpu = cpu_model_name();
        report.threads = opts.threads;
        report.prompt_len = opts.prompt_len;
        report.gen_len = opts.gen_len;
        report.n_heads = cfg.n_heads;
        report.kv_groups = cfg.kv_groups;
    }

    void once() {
        const auto t0 = Clock::now();
        std::vector<float> logits = engine.prefill(prompt, cache);
        const auto t1 = Clock::now();
        for (std::size_t i = 0; i < opts.gen_len; ++i) logits = engine.decode_step(argmax(logits), cache);
        const auto t2 = Clock::now();
        RepeatTiming r;
        r.prefill_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        r.decode_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
        r.tokens_per_sec = static_cast<double>(opts.gen_len) / (r.decode_ms / 1000.0);
        report.repeats.push_back(r);
    }

    ThroughputReport finish() {
        std::vector<double> tps;
        std::vector<double> pre;
        for (const auto& r : report.repeats) {
            tps.push_back(r.tokens_per_sec);
            pre.push_back(r.prefill_ms);
        }
        report.median_tokens_per_sec = median(tps);
        report.median_prefill_ms = median(pre);
        return report;
    }

    Engine engine;
    KVCache cache;
    BenchmarkOptions opts;
    std::vector<TokenId> prompt;
    ThroughputReport report;
};

std::map<std::string, std::string> parse_pairs(const std::string& line) {
    std::map<std::string, std::string> out;
    std::istringstream in(line);
    std::string tok;
    in >> tok;  // record kind
    while (in >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw ArgumentError("malformed report field: " + tok);
        out[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return out;
}

}  // namespace

ThroughputReport benchmark_throughput(const ModelParams<float>& params, const ModelConfig& cfg,
                                      const BenchmarkOptions& opts) {
    Run run(params, cfg, opts);
    for (std::size_t i = 0; i < opts.repeats; ++i) run.once();
    return run.finish();
}

std::pair<ThroughputReport, ThroughputReport> benchmark_pair(const ModelParams<float>& params_a,
                                                             const ModelConfig& cfg_a,
                                                             const ModelParams<float>& params_b,
                                                             const ModelConfig& cfg_b, BenchmarkOptions opts_a,
                                                             BenchmarkOptions opts_b) {
    Run a(params_a, cfg_a, opts_a);
    Run b(params_b, cfg_b, opts_b);
    const std::size_t n = std::max(opts_a.repeats, opts_b.repeats);
    for (std::size_t i = 0; i < n; ++i) {
        if (i < opts_a.repeats) a.once();
        if (i < opts_b.repeats) b.once();
    }
    return {a.finish(), b.finish()};
}

std::string format_report(const ThroughputReport& r) {
    using util::format_double;
    std::ostringstream out;
    for (std::size_t i = 0; i < r.repeats.size(); ++i) {
        const auto& t = r.repeats[i];
        out << "repeat label=" << r.label << " index=" << i << " prompt_len=" << r.prompt_len
            << " gen_len=" << r.gen_len << " prefill_ms=" << format_double(t.prefill_ms)
            << " decode_ms=" << format_double(t.decode_ms) << " tokens_per_sec=" << format_double(t.tokens_per_sec)
            << "\n";
    }
    out << "summary label=" << r.label << " cpu=" << r.cpu << " threads=" << r.threads
        << " prompt_len=" << r.prompt_len << " gen_len=" << r.gen_len << " n_heads=" << r.n_heads
        << " kv_groups=" << r.kv_groups << " repeats=" << r.repeats.size()
        << " median_tokens_per_sec=" << format_double(r.median_tokens_per_sec)
        << " median_prefill_ms=" << format_double(r.median_prefill_ms) << "\n";
    return out.str();
}

ThroughputReport parse_report(const std::string& text) {
    ThroughputReport r;
    std::istringstream in(text);
    std::string line;
    bool have_summary = false;
    auto num = [](const std::map<std::string, std::string>& kv, const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw ArgumentError("report line lacks key " + key);
        return std::stod(it->second);
    };
    while (std::getline(in, line)) {
        if (line.rfind("repeat ", 0) == 0) {
            const auto kv = parse_pairs(line);
            r.repeats.push_back(RepeatTiming{num(kv, "prefill_ms"), num(kv, "decode_ms"), num(kv, "tokens_per_sec")});
        } else if (line.rfind("summary ", 0) == 0) {
            const auto kv = parse_pairs(line);
            r.label = kv.at("label");
            r.cpu = kv.at("cpu");
            r.threads = static_cast<std::size_t>(num(kv, "threads"));
            r.prompt_len = static_cast<std::size_t>(num(kv, "prompt_len"));
            r.gen_len = static_cast<std::size_t>(num(kv, "gen_len"));
            r.n_heads = static_cast<std::size_t>(num(kv, "n_heads"));
            r.kv_groups = static_cast<std::size_t>(num(kv, "kv_groups"));
            r.median_tokens_per_sec = num(kv, "median_tokens_per_sec");
            r.median_prefill_ms = num(kv, "median_prefill_ms");
            if (static_cast<std::size_t>(num(kv, "repeats")) != r.repeats.size()) {
                throw ArgumentError("summary repeat count disagrees with repeat lines");
            }
            have_summary = true;
        }
    }
    if (!have_summary) throw ArgumentError("report has no summary line");
    return r;
}

std::string cpu_model_name() {
    std::ifstream in("/proc/cpuinfo");
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("model name", 0) == 0) {
            auto colon = line.find(':');
            if (colon == std::string::npos) break;
            std::string name = line.substr(colon + 1);
            name.erase(0, name.find_first_not_of(' '));
            for (char& c : name) {
                if (c == ' ' || c == '=' || c == '\t') c = '_';
            }
            return name.empty() ? "unknown" : name;
        }
    }
    return "unknown";
}

}  // namespace geb::infer
