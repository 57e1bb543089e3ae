#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "geb/util/kv_config.hpp"

namespace geb::corpus {

struct StageEvent {
    std::string stage;
    std::string action;
    std::string reason;

    bool operator==(const StageEvent&) const = default;
};

// Text layout after rule_clean: paragraphs separated by '\n', sentences
// within a paragraph joined by join_sentences().
struct Document {
    std::string id;
    std::string text;
    std::string source;
    std::vector<StageEvent> stage_log;  // append-only

    void log(std::string stage, std::string action, std::string reason) {
        stage_log.push_back({std::move(stage), std::move(action), std::move(reason)});
    }
};

struct Shard {
    std::string name;  // output file stem
    std::vector<Document> docs;
};

struct PipelineConfig {
    std::size_t min_sentence_len = 6;  // code points
    std::u32string terminal_punct = U".!?。！？";
    std::string url_pattern = R"((?:https?|ftp)://[^\s<>"']*[^\s<>"'.,;:!?)\]]|www\.[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)+(?:/[^\s<>"']*[^\s<>"'.,;:!?)\]])?)";
    std::vector<std::string> pii_patterns = {
        R"([A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,})",
        R"(\+?\d[\d -]{7,}\d)",
    };
    std::set<std::string> blocklist;
    double ppl_threshold = 1000.0;
    std::size_t ngram_order = 3;
    double ngram_lambda = 0.8;
    double ngram_k = 0.1;
    double density_threshold = 0.2;
    std::set<std::string> stopwords = default_stopwords();
    double concat_sim_threshold = 0.5;

    static std::set<std::string> default_stopwords();

    void validate() const;

    // Lists are comma-separated; regexes use keys url_pattern and
    // pii_pattern.N (ECMAScript dialect).
    util::KvDoc to_kv() const;
    static PipelineConfig from_kv(const util::KvDoc& doc);
};

struct Verdict {
    bool keep = true;
    std::string reason;  // set when keep is false
};

// Markup removal, redaction, sentence segmentation and sentence-level drops.
// Mutates `doc`; a rejected document keeps its stage_log for the reject file.
Verdict rule_clean(Document& doc, const PipelineConfig& cfg);

// Interpolated n-gram model over word_tokens with an add-k unigram floor.
// Contexts are padded with <s>; unseen words map to <unk>.
class NgramModel {
   public:
    static constexpr const char* kUnk = "<unk>";
    static constexpr const char* kBos = "<s>";

    std::size_t order() const { return order_; }
    double lambda() const { return lambda_; }
    double k() const { return k_; }
    // Predictable symbols: training words plus <unk>.
    const std::vector<std::string>& vocab() const { return vocab_; }

    // P(word | context); only the last order-1 context words matter, and
    // missing leading context is <s>.
    double prob(const std::string& word, const std::vector<std::string>& context) const;

    friend NgramModel train_ngram(const std::vector<std::string>& corpus, std::size_t order, double lambda,
                                  double k, const std::u32string& terminals);

   private:
    double prob_at(const std::string& w, const std::vector<std::string>& ctx, std::size_t n) const;
    std::string map_word(const std::string& w) const;

    std::size_t order_ = 1;
    double lambda_ = 0.8;
    double k_ = 0.1;
    std::vector<std::string> vocab_;
    std::map<std::string, std::uint64_t> unigram_;
    std::uint64_t total_ = 0;
    // counts_[n][context of n words][word]; context totals in ctx_total_.
    std::vector<std::map<std::vector<std::string>, std::map<std::string, std::uint64_t>>> counts_;
    std::vector<std::map<std::vector<std::string>, std::uint64_t>> ctx_total_;
};

// Each corpus entry is split into sentences; n-grams never cross sentences.
NgramModel train_ngram(const std::vector<std::string>& corpus, std::size_t order, double lambda = 0.8,
                       double k = 0.1, const std::u32string& terminals = U".!?。！？");

double perplexity(const NgramModel& model, const std::string& text, const std::u32string& terminals = U".!?。！？");

Verdict perplexity_filter(Document& doc, const NgramModel& model, const PipelineConfig& cfg);
Verdict keyword_density_filter(Document& doc, const PipelineConfig& cfg);
double keyword_density(const std::string& text, const std::set<std::string>& stopwords);

// Merges adjacent paragraphs when the last sentence of one and the first of
// the next reach concat_sim_threshold. Returns the number of merges.
std::size_t concat_sentences(Document& doc, const PipelineConfig& cfg);

struct ConsecutiveStats {
    std::size_t sentences_removed = 0;
    std::size_t paragraphs_removed = 0;
};

// Collapses runs of equal normalized sentences inside each paragraph, then
// runs of equal normalized paragraphs.
ConsecutiveStats dedup_consecutive(Document& doc, const PipelineConfig& cfg);

struct CrossStats {
    // (shard of first occurrence, shard of removed copy) -> paragraphs removed
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> removed;
    std::size_t total() const;
};

// First occurrence of a normalized paragraph wins in shard order. Documents
// left with no paragraph are moved to `rejected` with reason "duplicate".
CrossStats dedup_cross(std::vector<Shard>& shards, std::vector<Document>* rejected = nullptr);

struct StageReport {
    std::string stage;
    std::string unit;
    std::size_t input = 0;
    std::size_t output = 0;
    std::size_t dropped = 0;
    bool skipped = false;
    std::map<std::string, std::size_t> reasons;
};

struct PipelineResult {
    std::vector<Shard> shards;
    std::vector<Document> rejected;
    std::vector<StageReport> report;
    CrossStats cross;
};

// Stages: rule_clean, perplexity (skipped without a model), density, concat,
// dedup_consecutive, dedup_cross.
PipelineResult pipeline_run(std::vector<Shard> shards, const PipelineConfig& cfg, const NgramModel* ppl_model);

std::string report_json(const PipelineResult& result);

// One {"id", "text", "source"} object per line. Lines that are not valid
// UTF-8 become documents that rule_clean rejects as "encoding".
Shard read_shard(const std::filesystem::path& path);
void write_shard(const std::filesystem::path& path, const std::vector<Document>& docs);
void write_rejected(const std::filesystem::path& path, const std::vector<Document>& docs);

}  // namespace geb::corpus
