#include "geb/tok/bpe.hpp"

#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "geb/errors.hpp"
#include "geb/util/utf8.hpp"

namespace geb::tok {

namespace {

const char* const kSpecialNames[kNumSpecial] = {"<pad>", "<bos>", "<eos>", "<unk>"};

std::string to_hex(const std::string& bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (unsigned char c : bytes) {
        out.push_back(digits[c >> 4]);
        out.push_back(digits[c & 0xF]);
    }
    return out;
}

std::string from_hex(const std::string& hex) {
    if (hex.empty() || hex.size() % 2 != 0) throw IoError("bad hex token '" + hex + "'");
    const auto nibble = [&](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw IoError("bad hex token '" + hex + "'");
    };
    std::string out;
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        out.push_back(static_cast<char>(nibble(hex[i]) * 16 + nibble(hex[i + 1])));
    }
    return out;
}

// Replaces every non-overlapping (left, right) occurrence, scanning left to right.
void apply_merge(std::vector<TokenId>& seq, TokenId left, TokenId right, TokenId merged) {
    std::size_t w = 0;
    for (std::size_t r = 0; r < seq.size(); ++r) {
        if (r + 1 < seq.size() && seq[r] == left && seq[r + 1] == right) {
            seq[w++] = merged;
            ++r;
        } else {
            seq[w++] = seq[r];
        }
    }
    seq.resize(w);
}

std::vector<TokenId> byte_ids(std::string_view text) {
    std::vector<TokenId> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(static_cast<TokenId>(c + kNumSpecial));
    return ids;
}

struct PairHash {
    std::size_t operator()(const std::pair<TokenId, TokenId>& p) const {
        return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(p.first) << 32) | p.second);
    }
};

}  // namespace

Vocab::Vocab() {
    tokens_.resize(kNumSpecial);
    for (int b = 0; b < 256; ++b) tokens_.push_back(std::string(1, static_cast<char>(b)));
}

const std::string& Vocab::token_bytes(TokenId id) const {
    if (id >= tokens_.size()) {
        throw VocabularyError("token id " + std::to_string(id) + " outside vocabulary of " +
                              std::to_string(tokens_.size()));
    }
    return tokens_[id];
}

std::string Vocab::special_name(TokenId id) {
    if (id >= kNumSpecial) throw VocabularyError("token id " + std::to_string(id) + " is not a special token");
    return kSpecialNames[id];
}

TokenId Vocab::add_merge(TokenId left, TokenId right) {
    if (left >= tokens_.size() || right >= tokens_.size() || is_special(left) || is_special(right)) {
        throw VocabularyError("merge parts " + std::to_string(left) + ", " + std::to_string(right) +
                              " are not mergeable tokens");
    }
    if (rank_.count({left, right}) != 0) {
        throw VocabularyError("duplicate merge " + std::to_string(left) + ", " + std::to_string(right));
    }
    const auto id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(tokens_[left] + tokens_[right]);
    rank_[{left, right}] = merges_.size();
    merges_.emplace_back(left, right);
    return id;
}

std::size_t Vocab::merge_rank(TokenId left, TokenId right) const {
    auto it = rank_.find({left, right});
    return it == rank_.end() ? npos : it->second;
}

std::string Vocab::to_text() const {
    std::ostringstream out;
    out << "gebbpe " << kVocabFileVersion << " size=" << size() << " specials=";
    for (std::size_t i = 0; i < kNumSpecial; ++i) out << (i ? "," : "") << kSpecialNames[i];
    out << '\n';
    for (const auto& [l, r] : merges_) out << to_hex(tokens_[l]) << ' ' << to_hex(tokens_[r]) << '\n';
    return out.str();
}

Vocab Vocab::from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw IoError("vocab file is empty");
    std::istringstream head(line);
    std::string magic, size_field, specials_field;
    int version = 0;
    head >> magic >> version >> size_field >> specials_field;
    if (magic != "gebbpe") throw IoError("not a vocab file (bad magic '" + magic + "')");
    if (version != kVocabFileVersion) throw IoError("unsupported vocab file version " + std::to_string(version));
    if (size_field.rfind("size=", 0) != 0) throw IoError("vocab header lacks size=");
    const std::size_t declared = std::stoull(size_field.substr(5));

    Vocab v;
    std::unordered_map<std::string, TokenId> by_bytes;
    for (std::size_t id = kNumSpecial; id < v.tokens_.size(); ++id) by_bytes[v.tokens_[id]] = static_cast<TokenId>(id);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream parts(line);
        std::string lh, rh;
        if (!(parts >> lh >> rh)) throw IoError("vocab line " + std::to_string(lineno) + ": expected two parts");
        const auto li = by_bytes.find(from_hex(lh));
        const auto ri = by_bytes.find(from_hex(rh));
        if (li == by_bytes.end() || ri == by_bytes.end()) {
            throw IoError("vocab line " + std::to_string(lineno) + ": merge part not in vocabulary");
        }
        const TokenId id = v.add_merge(li->second, ri->second);
        by_bytes.emplace(v.tokens_[id], id);
    }
    if (v.size() != declared) {
        throw IoError("vocab header declares " + std::to_string(declared) + " entries, file holds " +
                      std::to_string(v.size()));
    }
    return v;
}

void Vocab::save(const std::filesystem::path& path) const {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << to_text();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return from_text(buf.str());
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

Vocab bpe_train(const std::vector<std::string>& corpus, std::size_t target_size) {
    if (target_size < kByteVocab) {
        throw ArgumentError("target_size " + std::to_string(target_size) + " is below the byte vocabulary of " +
                            std::to_string(kByteVocab));
    }
    std::vector<std::vector<TokenId>> seqs;
    for (const auto& text : corpus) {
        if (!text.empty()) seqs.push_back(byte_ids(text));
    }
    if (seqs.empty()) throw ArgumentError("bpe_train: empty corpus");

    Vocab vocab;
    // A pair whose bytes already name a token would make the hex file ambiguous.
    std::unordered_set<std::string> known;
    for (std::size_t id = kNumSpecial; id < vocab.size(); ++id) known.insert(vocab.token_bytes(static_cast<TokenId>(id)));
    while (vocab.size() < target_size) {
        std::unordered_map<std::pair<TokenId, TokenId>, std::size_t, PairHash> counts;
        for (const auto& s : seqs) {
            for (std::size_t i = 0; i + 1 < s.size(); ++i) ++counts[{s[i], s[i + 1]}];
        }
        const std::pair<TokenId, TokenId>* best = nullptr;
        std::size_t best_count = 0;
        for (const auto& [pair, count] : counts) {
            if (count < best_count) continue;
            if (known.count(vocab.token_bytes(pair.first) + vocab.token_bytes(pair.second)) != 0) continue;
            if (count == best_count && best != nullptr) {
                const auto& a = vocab.token_bytes(pair.first);
                const auto& b = vocab.token_bytes(pair.second);
                const auto& ba = vocab.token_bytes(best->first);
                const auto& bb = vocab.token_bytes(best->second);
                if (std::tie(a, b) >= std::tie(ba, bb)) continue;
            }
            best = &pair;
            best_count = count;
        }
        if (best == nullptr || best_count < 2) break;
        const auto [l, r] = *best;
        const TokenId merged = vocab.add_merge(l, r);
        known.insert(vocab.token_bytes(merged));
        for (auto& s : seqs) apply_merge(s, l, r, merged);
    }
    return vocab;
}

std::vector<TokenId> encode(std::string_view text, const Vocab& vocab) {
    std::vector<TokenId> ids = byte_ids(text);
    while (ids.size() >= 2) {
        std::size_t best_rank = Vocab::npos;
        for (std::size_t i = 0; i + 1 < ids.size(); ++i) best_rank = std::min(best_rank, vocab.merge_rank(ids[i], ids[i + 1]));
        if (best_rank == Vocab::npos) break;
        const auto [l, r] = vocab.merges()[best_rank];
        apply_merge(ids, l, r, static_cast<TokenId>(kByteVocab + best_rank));
    }
    return ids;
}

std::string decode(const std::vector<TokenId>& ids, const Vocab& vocab) {
    std::string bytes;
    for (TokenId id : ids) {
        const std::string& b = vocab.token_bytes(id);  // throws for out-of-range ids
        bytes += b;
    }
    return util::sanitize_utf8(bytes);
}

}  // namespace geb::tok
