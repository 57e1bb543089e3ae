#include "geb/corpus/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "geb/corpus/text.hpp"
#include "geb/errors.hpp"
#include "geb/util/hash.hpp"
#include "geb/util/utf8.hpp"

namespace geb::corpus {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr auto kJsonReplace = nlohmann::json::error_handler_t::replace;

std::string lower_ascii(std::string s) {
    for (char& c : s) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return s;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i != 0) out += sep;
        out += parts[i];
    }
    return out;
}

std::set<std::string> parse_word_set(const std::vector<std::string>& items) {
    std::set<std::string> out;
    for (const auto& w : items) {
        if (!w.empty()) out.insert(lower_ascii(w));
    }
    return out;
}

bool is_ascii(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return static_cast<unsigned char>(c) < 0x80; });
}

bool blocklisted(const std::string& sentence, const std::set<std::string>& blocklist) {
    if (blocklist.empty()) return false;
    const auto tokens = word_tokens(sentence);
    const std::set<std::string> present(tokens.begin(), tokens.end());
    const std::string lowered = lower_ascii(sentence);
    for (const auto& w : blocklist) {
        if (is_ascii(w) ? present.count(w) != 0 : lowered.find(w) != std::string::npos) return true;
    }
    return false;
}

std::size_t count_paragraphs(const Document& d) { return split_paragraphs(d.text).size(); }

std::size_t count_sentences(const Document& d, const PipelineConfig& cfg) {
    std::size_t n = 0;
    for (const auto& p : split_paragraphs(d.text)) n += split_sentences(p, cfg.terminal_punct).size();
    return n;
}

struct CompiledPatterns {
    std::regex url;
    std::vector<std::regex> pii;
    std::regex space_before_punct{R"( +([.,;:!?]))"};
};

CompiledPatterns compile(const PipelineConfig& cfg) {
    CompiledPatterns c;
    try {
        c.url = std::regex(cfg.url_pattern, std::regex::ECMAScript);
        for (const auto& p : cfg.pii_patterns) c.pii.emplace_back(p, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
        throw ConfigError(std::string("invalid redaction pattern: ") + e.what());
    }
    return c;
}

// Compiled once per thread for the most recent pattern set.
const CompiledPatterns& compiled(const PipelineConfig& cfg) {
    thread_local std::string key;
    thread_local CompiledPatterns cache;
    std::string k = cfg.url_pattern;
    for (const auto& p : cfg.pii_patterns) k += '\n' + p;
    if (key != k || k.empty()) {
        cache = compile(cfg);
        key = std::move(k);
    }
    return cache;
}

StageReport new_report(const std::string& stage, const std::string& unit) {
    StageReport r;
    r.stage = stage;
    r.unit = unit;
    return r;
}

std::size_t count_matches(const std::string& s, const std::regex& re) {
    return static_cast<std::size_t>(std::distance(std::sregex_iterator(s.begin(), s.end(), re), std::sregex_iterator()));
}

}  // namespace

std::set<std::string> PipelineConfig::default_stopwords() {
    return {"a",    "an",   "the",  "and",   "or",    "but",  "if",   "of",   "to",   "in",   "on",   "at",
            "by",   "for",  "with", "from",  "as",    "is",   "are",  "was",  "were", "be",   "been", "being",
            "it",   "its",  "this", "that",  "these", "those", "i",   "you",  "he",   "she",  "we",   "they",
            "me",   "him",  "her",  "us",    "them",  "my",   "your", "his",  "our",  "their", "not", "no",
            "so",   "do",   "does", "did",   "have",  "has",  "had",  "will", "would", "can", "could", "just",
            "there", "here", "what", "which", "who",  "then", "than", "too",  "very", "all",  "any",  "some",
            "的",   "了",   "是",   "在",    "和",    "也",   "就",   "都",   "而",   "及",   "与",   "着",
            "或",   "我",   "你",   "他",    "她",    "它",   "们",   "这",   "那",   "之",   "其",   "个"};
}

void PipelineConfig::validate() const {
    if (terminal_punct.empty()) throw ConfigError("terminal_punct must not be empty");
    if (!(ppl_threshold > 0.0)) throw ConfigError("ppl_threshold must be positive");
    if (ngram_order == 0) throw ConfigError("ngram_order must be at least 1");
    if (!(ngram_lambda >= 0.0 && ngram_lambda <= 1.0)) throw ConfigError("ngram_lambda must lie in [0, 1]");
    if (!(ngram_k >= 0.0)) throw ConfigError("ngram_k must be non-negative");
    if (!(density_threshold >= 0.0 && density_threshold <= 1.0)) {
        throw ConfigError("density_threshold must lie in [0, 1]");
    }
    if (!(concat_sim_threshold >= 0.0 && concat_sim_threshold <= 1.0)) {
        throw ConfigError("concat_sim_threshold must lie in [0, 1]");
    }
    compile(*this);
}

util::KvDoc PipelineConfig::to_kv() const {
    util::KvDoc d;
    d.set("min_sentence_len", static_cast<std::uint64_t>(min_sentence_len));
    d.set("terminal_punct", util::encode_utf8(terminal_punct));
    d.set("url_pattern", url_pattern);
    for (std::size_t i = 0; i < pii_patterns.size(); ++i) d.set("pii_pattern." + std::to_string(i), pii_patterns[i]);
    d.set("blocklist", join(std::vector<std::string>(blocklist.begin(), blocklist.end()), ","));
    d.set("ppl_threshold", ppl_threshold);
    d.set("ngram_order", static_cast<std::uint64_t>(ngram_order));
    d.set("ngram_lambda", ngram_lambda);
    d.set("ngram_k", ngram_k);
    d.set("density_threshold", density_threshold);
    d.set("stopwords", join(std::vector<std::string>(stopwords.begin(), stopwords.end()), ","));
    d.set("concat_sim_threshold", concat_sim_threshold);
    return d;
}

PipelineConfig PipelineConfig::from_kv(const util::KvDoc& d) {
    PipelineConfig c;
    c.min_sentence_len = d.get_uint("min_sentence_len", c.min_sentence_len);
    if (auto t = d.get("terminal_punct")) {
        auto cps = util::decode_utf8(*t);
        if (!cps) throw ConfigError("terminal_punct is not valid UTF-8");
        c.terminal_punct = *cps;
    }
    c.url_pattern = d.get_string("url_pattern", c.url_pattern);
    const util::KvDoc pii = d.section("pii_pattern.");
    if (!pii.entries().empty()) {
        // Numeric order, not the lexical key order.
        std::vector<std::pair<std::uint64_t, std::string>> ordered;
        for (const auto& [k, v] : pii.entries()) {
            try {
                ordered.emplace_back(std::stoull(k), v);
            } catch (const std::exception&) {
                throw ConfigError("pii_pattern key suffix must be a number: pii_pattern." + k);
            }
        }
        std::sort(ordered.begin(), ordered.end());
        c.pii_patterns.clear();
        for (auto& [i, v] : ordered) c.pii_patterns.push_back(v);
    }
    if (d.contains("blocklist")) c.blocklist = parse_word_set(d.get_list("blocklist", {}));
    c.ppl_threshold = d.get_double("ppl_threshold", c.ppl_threshold);
    c.ngram_order = d.get_uint("ngram_order", c.ngram_order);
    c.ngram_lambda = d.get_double("ngram_lambda", c.ngram_lambda);
    c.ngram_k = d.get_double("ngram_k", c.ngram_k);
    c.density_threshold = d.get_double("density_threshold", c.density_threshold);
    if (d.contains("stopwords")) c.stopwords = parse_word_set(d.get_list("stopwords", {}));
    c.concat_sim_threshold = d.get_double("concat_sim_threshold", c.concat_sim_threshold);
    c.validate();
    return c;
}

Verdict rule_clean(Document& doc, const PipelineConfig& cfg) {
    static constexpr const char* kStage = "rule_clean";
    if (!util::is_valid_utf8(doc.text)) {
        doc.log(kStage, "reject", "encoding");
        return {false, "encoding"};
    }
    const CompiledPatterns& re = compiled(cfg);
    std::string text = strip_markup(doc.text);
    if (text != doc.text) doc.log(kStage, "strip", "markup");
    const std::string no_controls = strip_controls(text);
    if (no_controls != text) doc.log(kStage, "strip", "control_chars");
    text = no_controls;

    std::vector<std::string> paragraphs;
    std::size_t line_start = 0;
    while (line_start <= text.size()) {
        std::size_t line_end = text.find('\n', line_start);
        if (line_end == std::string::npos) line_end = text.size();
        std::string para = text.substr(line_start, line_end - line_start);
        line_start = line_end + 1;

        bool redacted = false;
        if (const std::size_t n = count_matches(para, re.url); n != 0) {
            para = std::regex_replace(para, re.url, "");
            for (std::size_t i = 0; i < n; ++i) doc.log(kStage, "redact", "url");
            redacted = true;
        }
        for (const auto& p : re.pii) {
            if (const std::size_t n = count_matches(para, p); n != 0) {
                para = std::regex_replace(para, p, "");
                for (std::size_t i = 0; i < n; ++i) doc.log(kStage, "redact", "pii");
                redacted = true;
            }
        }
        para = collapse_whitespace(para);
        if (redacted) para = std::regex_replace(para, re.space_before_punct, "$1");

        std::vector<std::string> kept;
        for (auto& s : split_sentences(para, cfg.terminal_punct)) {
            if (!ends_with_terminal(s, cfg.terminal_punct)) {
                doc.log(kStage, "drop_sentence", "no_terminal_punct");
            } else if (codepoint_length(s) < cfg.min_sentence_len) {
                doc.log(kStage, "drop_sentence", "too_short");
            } else if (blocklisted(s, cfg.blocklist)) {
                doc.log(kStage, "drop_sentence", "blocklist");
            } else {
                kept.push_back(std::move(s));
            }
        }
        if (!kept.empty()) paragraphs.push_back(join_sentences(kept));
    }
    doc.text = join(paragraphs, "\n");
    if (paragraphs.empty()) {
        doc.log(kStage, "reject", "no_sentences");
        return {false, "no_sentences"};
    }
    return {};
}

// ---- n-gram model --------------------------------------------------------

std::string NgramModel::map_word(const std::string& w) const { return unigram_.count(w) != 0 ? w : kUnk; }

double NgramModel::prob_at(const std::string& w, const std::vector<std::string>& ctx, std::size_t n) const {
    if (n == 0) {
        const auto it = unigram_.find(w);
        const double c = it == unigram_.end() ? 0.0 : static_cast<double>(it->second);
        return (c + k_) / (static_cast<double>(total_) + k_ * static_cast<double>(vocab_.size()));
    }
    const std::vector<std::string> h(ctx.end() - static_cast<std::ptrdiff_t>(n), ctx.end());
    const double lower = prob_at(w, ctx, n - 1);
    const auto tot = ctx_total_[n].find(h);
    if (tot == ctx_total_[n].end()) return lower;
    const auto& cont = counts_[n].at(h);
    const auto it = cont.find(w);
    const double c = it == cont.end() ? 0.0 : static_cast<double>(it->second);
    return lambda_ * c / static_cast<double>(tot->second) + (1.0 - lambda_) * lower;
}

double NgramModel::prob(const std::string& word, const std::vector<std::string>& context) const {
    const std::size_t need = order_ - 1;
    std::vector<std::string> ctx(need, kBos);
    const std::size_t take = std::min(need, context.size());
    for (std::size_t i = 0; i < take; ++i) {
        const std::string& c = context[context.size() - take + i];
        ctx[need - take + i] = c == kBos ? c : map_word(c);
    }
    const std::string w = word == kUnk ? word : map_word(word);
    return prob_at(w, ctx, need);
}

namespace {

std::vector<std::vector<std::string>> sentence_tokens(const std::string& text, const std::u32string& terminals) {
    std::vector<std::vector<std::string>> out;
    for (const auto& p : split_paragraphs(text)) {
        for (const auto& s : split_sentences(p, terminals)) {
            auto toks = word_tokens(s);
            if (!toks.empty()) out.push_back(std::move(toks));
        }
    }
    return out;
}

}  // namespace

NgramModel train_ngram(const std::vector<std::string>& corpus, std::size_t order, double lambda, double k,
                       const std::u32string& terminals) {
    if (order == 0) throw ArgumentError("n-gram order must be at least 1");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ArgumentError("n-gram lambda must lie in [0, 1]");
    if (!(k >= 0.0)) throw ArgumentError("n-gram k must be non-negative");
    NgramModel m;
    m.order_ = order;
    m.lambda_ = lambda;
    m.k_ = k;
    m.counts_.resize(order);
    m.ctx_total_.resize(order);
    for (const auto& text : corpus) {
        for (const auto& toks : sentence_tokens(text, terminals)) {
            std::vector<std::string> padded(order - 1, NgramModel::kBos);
            padded.insert(padded.end(), toks.begin(), toks.end());
            for (std::size_t i = order - 1; i < padded.size(); ++i) {
                const std::string& w = padded[i];
                ++m.unigram_[w];
                ++m.total_;
                for (std::size_t n = 1; n < order; ++n) {
                    const std::vector<std::string> h(padded.begin() + static_cast<std::ptrdiff_t>(i - n),
                                                     padded.begin() + static_cast<std::ptrdiff_t>(i));
                    ++m.counts_[n][h][w];
                    ++m.ctx_total_[n][h];
                }
            }
        }
    }
    if (m.total_ == 0) throw ArgumentError("train_ngram: corpus has no words");
    for (const auto& [w, c] : m.unigram_) m.vocab_.push_back(w);
    m.vocab_.push_back(NgramModel::kUnk);
    return m;
}

double perplexity(const NgramModel& model, const std::string& text, const std::u32string& terminals) {
    double nll = 0.0;
    std::size_t n = 0;
    for (const auto& toks : sentence_tokens(text, terminals)) {
        for (std::size_t i = 0; i < toks.size(); ++i) {
            const std::vector<std::string> ctx(toks.begin(), toks.begin() + static_cast<std::ptrdiff_t>(i));
            nll -= std::log(model.prob(toks[i], ctx));
            ++n;
        }
    }
    if (n == 0) throw ArgumentError("perplexity: text has no words");
    return std::exp(nll / static_cast<double>(n));
}

Verdict perplexity_filter(Document& doc, const NgramModel& model, const PipelineConfig& cfg) {
    static constexpr const char* kStage = "perplexity";
    double ppl = 0.0;
    try {
        ppl = perplexity(model, doc.text, cfg.terminal_punct);
    } catch (const ArgumentError&) {
        doc.log(kStage, "reject", "empty");
        return {false, "empty"};
    }
    if (!(ppl <= cfg.ppl_threshold)) {
        doc.log(kStage, "reject", "perplexity");
        return {false, "perplexity"};
    }
    return {};
}

double keyword_density(const std::string& text, const std::set<std::string>& stopwords) {
    const auto toks = word_tokens(text);
    if (toks.empty()) return 0.0;
    std::size_t content = 0;
    for (const auto& t : toks) content += stopwords.count(t) == 0 ? 1 : 0;
    return static_cast<double>(content) / static_cast<double>(toks.size());
}

Verdict keyword_density_filter(Document& doc, const PipelineConfig& cfg) {
    static constexpr const char* kStage = "density";
    if (word_tokens(doc.text).empty()) {
        doc.log(kStage, "reject", "empty");
        return {false, "empty"};
    }
    if (keyword_density(doc.text, cfg.stopwords) < cfg.density_threshold) {
        doc.log(kStage, "reject", "low_density");
        return {false, "low_density"};
    }
    return {};
}

std::size_t concat_sentences(Document& doc, const PipelineConfig& cfg) {
    const auto paragraphs = split_paragraphs(doc.text);
    if (paragraphs.empty()) return 0;
    std::vector<std::vector<std::string>> merged;
    std::size_t merges = 0;
    for (const auto& p : paragraphs) {
        auto sentences = split_sentences(p, cfg.terminal_punct);
        if (!merged.empty() && !sentences.empty() &&
            tf_cosine(merged.back().back(), sentences.front()) >= cfg.concat_sim_threshold) {
            merged.back().insert(merged.back().end(), sentences.begin(), sentences.end());
            doc.log("concat", "merge", "similar_paragraphs");
            ++merges;
        } else if (!sentences.empty()) {
            merged.push_back(std::move(sentences));
        }
    }
    std::vector<std::string> out;
    for (const auto& s : merged) out.push_back(join_sentences(s));
    doc.text = join(out, "\n");
    return merges;
}

ConsecutiveStats dedup_consecutive(Document& doc, const PipelineConfig& cfg) {
    static constexpr const char* kStage = "dedup_consecutive";
    ConsecutiveStats stats;
    std::vector<std::string> paragraphs;
    for (const auto& p : split_paragraphs(doc.text)) {
        std::vector<std::string> kept;
        std::string last;
        for (auto& s : split_sentences(p, cfg.terminal_punct)) {
            std::string norm = normalize_for_dedup(s);
            if (!kept.empty() && norm == last) {
                ++stats.sentences_removed;
                doc.log(kStage, "drop_sentence", "duplicate_sentence");
                continue;
            }
            last = std::move(norm);
            kept.push_back(std::move(s));
        }
        std::string para = join_sentences(kept);
        if (!paragraphs.empty() && normalize_for_dedup(paragraphs.back()) == normalize_for_dedup(para)) {
            ++stats.paragraphs_removed;
            doc.log(kStage, "drop_paragraph", "duplicate_paragraph");
            continue;
        }
        paragraphs.push_back(std::move(para));
    }
    doc.text = join(paragraphs, "\n");
    return stats;
}

std::size_t CrossStats::total() const {
    std::size_t n = 0;
    for (const auto& [k, v] : removed) n += v;
    return n;
}

CrossStats dedup_cross(std::vector<Shard>& shards, std::vector<Document>* rejected) {
    CrossStats stats;
    std::unordered_map<std::uint64_t, std::size_t> first_shard;
    for (std::size_t si = 0; si < shards.size(); ++si) {
        std::vector<Document> kept;
        for (auto& doc : shards[si].docs) {
            std::vector<std::string> survivors;
            for (auto& p : split_paragraphs(doc.text)) {
                const std::uint64_t h = util::fnv1a64(normalize_for_dedup(p));
                const auto [it, inserted] = first_shard.emplace(h, si);
                if (inserted) {
                    survivors.push_back(std::move(p));
                } else {
                    ++stats.removed[{it->second, si}];
                    doc.log("dedup_cross", "drop_paragraph", "duplicate_of_shard_" + shards[it->second].name);
                }
            }
            doc.text = join(survivors, "\n");
            if (survivors.empty()) {
                doc.log("dedup_cross", "reject", "duplicate");
                if (rejected != nullptr) rejected->push_back(std::move(doc));
            } else {
                kept.push_back(std::move(doc));
            }
        }
        shards[si].docs = std::move(kept);
    }
    return stats;
}

PipelineResult pipeline_run(std::vector<Shard> shards, const PipelineConfig& cfg, const NgramModel* ppl_model) {
    cfg.validate();
    PipelineResult result;

    // Document-level filter stage over every shard in order.
    const auto filter_stage = [&](const std::string& name, auto&& fn) {
        StageReport r = new_report(name, "documents");
        for (auto& shard : shards) {
            std::vector<Document> kept;
            for (auto& doc : shard.docs) {
                ++r.input;
                const Verdict v = fn(doc);
                if (v.keep) {
                    kept.push_back(std::move(doc));
                } else {
                    ++r.reasons[v.reason];
                    result.rejected.push_back(std::move(doc));
                }
            }
            shard.docs = std::move(kept);
            r.output += shard.docs.size();
        }
        r.dropped = r.input - r.output;
        return r;
    };
    const auto count_all = [&](auto&& counter) {
        std::size_t n = 0;
        for (const auto& shard : shards) {
            for (const auto& d : shard.docs) n += counter(d);
        }
        return n;
    };

    StageReport clean = filter_stage("rule_clean", [&](Document& d) { return rule_clean(d, cfg); });
    // Sentence-level drops do not change the document count; report them as reasons.
    for (const auto& shard : shards) {
        for (const auto& d : shard.docs) {
            for (const auto& e : d.stage_log) {
                if (e.stage == "rule_clean" && e.action == "drop_sentence") ++clean.reasons["sentence_" + e.reason];
            }
        }
    }
    for (const auto& d : result.rejected) {
        for (const auto& e : d.stage_log) {
            if (e.stage == "rule_clean" && e.action == "drop_sentence") ++clean.reasons["sentence_" + e.reason];
        }
    }
    result.report.push_back(clean);

    if (ppl_model != nullptr) {
        result.report.push_back(
            filter_stage("perplexity", [&](Document& d) { return perplexity_filter(d, *ppl_model, cfg); }));
    } else {
        StageReport r = new_report("perplexity", "documents");
        r.input = r.output = count_all([](const Document&) { return std::size_t{1}; });
        r.skipped = true;
        result.report.push_back(r);
    }

    result.report.push_back(filter_stage("density", [&](Document& d) { return keyword_density_filter(d, cfg); }));

    {
        StageReport r = new_report("concat", "paragraphs");
        r.input = count_all(count_paragraphs);
        std::size_t merges = 0;
        for (auto& shard : shards) {
            for (auto& d : shard.docs) merges += concat_sentences(d, cfg);
        }
        r.output = count_all(count_paragraphs);
        r.dropped = r.input - r.output;
        if (merges != 0) r.reasons["merged"] = merges;
        result.report.push_back(r);
    }

    {
        StageReport r = new_report("dedup_consecutive", "sentences");
        const auto sentences = [&](const Document& d) { return count_sentences(d, cfg); };
        r.input = count_all(sentences);
        ConsecutiveStats total;
        for (auto& shard : shards) {
            for (auto& d : shard.docs) {
                const ConsecutiveStats s = dedup_consecutive(d, cfg);
                total.sentences_removed += s.sentences_removed;
                total.paragraphs_removed += s.paragraphs_removed;
            }
        }
        r.output = count_all(sentences);
        r.dropped = r.input - r.output;
        if (total.sentences_removed != 0) r.reasons["duplicate_sentence"] = total.sentences_removed;
        if (total.paragraphs_removed != 0) r.reasons["duplicate_paragraph"] = total.paragraphs_removed;
        result.report.push_back(r);
    }

    {
        StageReport r = new_report("dedup_cross", "paragraphs");
        r.input = count_all(count_paragraphs);
        result.cross = dedup_cross(shards, &result.rejected);
        r.output = count_all(count_paragraphs);
        r.dropped = r.input - r.output;
        if (r.dropped != 0) r.reasons["duplicate"] = r.dropped;
        result.report.push_back(r);
    }

    result.shards = std::move(shards);
    return result;
}

std::string report_json(const PipelineResult& result) {
    ordered_json stages = ordered_json::array();
    for (const auto& r : result.report) {
        ordered_json s;
        s["stage"] = r.stage;
        s["unit"] = r.unit;
        s["input"] = r.input;
        s["output"] = r.output;
        s["dropped"] = r.dropped;
        s["skipped"] = r.skipped;
        s["reasons"] = ordered_json::object();
        for (const auto& [k, v] : r.reasons) s["reasons"][k] = v;
        stages.push_back(s);
    }
    ordered_json cross = ordered_json::array();
    for (const auto& [pair, n] : result.cross.removed) {
        cross.push_back(ordered_json{{"first_shard", pair.first}, {"duplicate_shard", pair.second}, {"removed", n}});
    }
    ordered_json shards = ordered_json::array();
    for (const auto& s : result.shards) shards.push_back(ordered_json{{"name", s.name}, {"documents", s.docs.size()}});
    ordered_json out;
    out["stages"] = stages;
    out["cross_shard"] = cross;
    out["output_shards"] = shards;
    out["rejected_documents"] = result.rejected.size();
    return out.dump(2, ' ', false, kJsonReplace) + "\n";
}

Shard read_shard(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read shard " + path.string());
    Shard shard;
    shard.name = path.stem().string();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const std::string fallback_id = shard.name + ":" + std::to_string(lineno);
        if (!util::is_valid_utf8(line)) {
            shard.docs.push_back(Document{fallback_id, line, shard.name, {}});
            continue;
        }
        nlohmann::json row;
        try {
            row = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!row.is_object() || !row.contains("text") || !row["text"].is_string()) {
            throw IoError(path.string() + ":" + std::to_string(lineno) + ": record lacks a string 'text' field");
        }
        Document d;
        d.id = row.contains("id") ? (row["id"].is_string() ? row["id"].get<std::string>() : row["id"].dump())
                                  : fallback_id;
        d.text = row["text"].get<std::string>();
        d.source = row.contains("source") && row["source"].is_string() ? row["source"].get<std::string>() : shard.name;
        shard.docs.push_back(std::move(d));
    }
    return shard;
}

namespace {

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        for (const auto& l : lines) out << l << '\n';
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

void write_shard(const std::filesystem::path& path, const std::vector<Document>& docs) {
    std::vector<std::string> lines;
    for (const auto& d : docs) {
        lines.push_back(ordered_json{{"id", d.id}, {"text", d.text}, {"source", d.source}}.dump(-1, ' ', false, kJsonReplace));
    }
    write_lines(path, lines);
}

void write_rejected(const std::filesystem::path& path, const std::vector<Document>& docs) {
    std::vector<std::string> lines;
    for (const auto& d : docs) {
        ordered_json log = ordered_json::array();
        for (const auto& e : d.stage_log) log.push_back(ordered_json{{"stage", e.stage}, {"action", e.action}, {"reason", e.reason}});
        lines.push_back(ordered_json{{"id", d.id}, {"source", d.source}, {"text", d.text}, {"stage_log", log}}.dump(
            -1, ' ', false, kJsonReplace));
    }
    write_lines(path, lines);
}

}  // namespace geb::corpus
