#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "geb/ndops/ops.hpp"

namespace geb::tok {

using nd::TokenId;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr std::size_t kNumSpecial = 4;
inline constexpr std::size_t kByteVocab = 256 + kNumSpecial;
inline constexpr std::size_t kFullScaleVocab = 64896;
inline constexpr int kVocabFileVersion = 1;

// Byte-level BPE vocabulary. Ids: specials, then the 256 bytes (byte b has
// id b + kNumSpecial), then one id per merge in training order.
class Vocab {
   public:
    Vocab();  // byte-level, no merges

    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::pair<TokenId, TokenId>>& merges() const { return merges_; }
    // Raw bytes of a token; empty for specials.
    const std::string& token_bytes(TokenId id) const;
    static std::string special_name(TokenId id);
    static bool is_special(TokenId id) { return id < kNumSpecial; }

    // Appends a merge of two existing ids and returns the new id.
    TokenId add_merge(TokenId left, TokenId right);
    // Rank of the merge (left, right), or npos if there is none.
    std::size_t merge_rank(TokenId left, TokenId right) const;

    void save(const std::filesystem::path& path) const;
    static Vocab load(const std::filesystem::path& path);
    std::string to_text() const;
    static Vocab from_text(const std::string& text);

    bool operator==(const Vocab& o) const { return merges_ == o.merges_; }

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

   private:
    std::vector<std::string> tokens_;
    std::vector<std::pair<TokenId, TokenId>> merges_;
    std::map<std::pair<TokenId, TokenId>, std::size_t> rank_;
};

// Greedy merges of the most frequent adjacent pair (overlapping occurrences
// counted; ties go to the lexicographically smallest pair of byte strings)
// until the vocabulary reaches target_size or no pair occurs twice. Pairs
// never span two corpus entries.
Vocab bpe_train(const std::vector<std::string>& corpus, std::size_t target_size);

std::vector<TokenId> encode(std::string_view text, const Vocab& vocab);

// Specials decode to nothing; invalid UTF-8 becomes U+FFFD.
std::string decode(const std::vector<TokenId>& ids, const Vocab& vocab);

}  // namespace geb::tok
