#include "geb/corpus/text.hpp"

#include <cctype>
#include <cmath>
#include <map>

#include "geb/util/utf8.hpp"

namespace geb::corpus {

namespace {

bool is_space(char32_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v' || c == 0x3000 || c == 0xA0; }

bool is_closer(char32_t c) {
    switch (c) {
        case '"':
        case '\'':
        case ')':
        case ']':
        case '}':
        case 0x2019:
        case 0x201D:
        case 0x300B:
        case 0x300D:
        case 0x300F:
        case 0x3011:
        case 0xFF09:
            return true;
        default:
            return false;
    }
}

bool is_wide_punct(char32_t c) {
    return (c >= 0xA1 && c <= 0xBF) || (c >= 0x2000 && c <= 0x206F) || (c >= 0x2E00 && c <= 0x2E7F) ||
           (c >= 0x3000 && c <= 0x303F) || (c >= 0xFE30 && c <= 0xFE4F) || (c >= 0xFF00 && c <= 0xFF0F) ||
           (c >= 0xFF1A && c <= 0xFF20) || (c >= 0xFF3B && c <= 0xFF40) || (c >= 0xFF5B && c <= 0xFF65);
}

bool is_terminal(char32_t c, std::u32string_view terminals) { return terminals.find(c) != std::u32string_view::npos; }

bool iequals_prefix(std::string_view text, std::size_t at, std::string_view word) {
    if (at + word.size() > text.size()) return false;
    for (std::size_t i = 0; i < word.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(text[at + i])) != word[i]) return false;
    }
    return true;
}

std::size_t find_ci(std::string_view text, std::size_t from, std::string_view word) {
    for (std::size_t i = from; i + word.size() <= text.size(); ++i) {
        if (iequals_prefix(text, i, word)) return i;
    }
    return std::string_view::npos;
}

bool is_block_tag(std::string_view name) {
    static const char* const kBlock[] = {"p",  "div", "br", "li", "ul",  "ol",      "tr",      "table", "h1",
                                         "h2", "h3",  "h4", "h5", "h6",  "section", "article", "header",
                                         "footer", "blockquote", "pre", "hr", "title", "body", "html", "head"};
    for (const char* b : kBlock) {
        if (name == b) return true;
    }
    return false;
}

}  // namespace

std::size_t codepoint_length(std::string_view text) { return util::decode_utf8_lossy(text).size(); }

std::string collapse_whitespace(std::string_view text) {
    const std::u32string cps = util::decode_utf8_lossy(text);
    std::u32string out;
    bool pending = false;
    for (char32_t c : cps) {
        if (is_space(c)) {
            pending = !out.empty();
            continue;
        }
        if (pending) out.push_back(' ');
        pending = false;
        out.push_back(c);
    }
    return util::encode_utf8(out);
}

std::string strip_markup(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (c != '<') {
            out.push_back(c);
            ++i;
            continue;
        }
        if (text.compare(i, 4, "<!--") == 0) {
            const std::size_t end = text.find("-->", i + 4);
            i = end == std::string_view::npos ? text.size() : end + 3;
            out.push_back(' ');
            continue;
        }
        bool raw_block = false;
        for (std::string_view name : {std::string_view("script"), std::string_view("style")}) {
            if (!iequals_prefix(text, i + 1, name)) continue;
            const std::size_t after = i + 1 + name.size();
            if (after < text.size() && text[after] != '>' && !std::isspace(static_cast<unsigned char>(text[after])) &&
                text[after] != '/') {
                continue;
            }
            const std::string close = "</" + std::string(name);
            const std::size_t end = find_ci(text, after, close);
            if (end == std::string_view::npos) {
                i = text.size();
            } else {
                const std::size_t gt = text.find('>', end);
                i = gt == std::string_view::npos ? text.size() : gt + 1;
            }
            out.push_back('\n');
            raw_block = true;
            break;
        }
        if (raw_block) continue;
        const std::size_t next = i + 1;
        const bool tag_like = next < text.size() && (std::isalpha(static_cast<unsigned char>(text[next])) ||
                                                     text[next] == '/' || text[next] == '!' || text[next] == '?');
        const std::size_t gt = tag_like ? text.find('>', next) : std::string_view::npos;
        if (gt == std::string_view::npos) {
            out.push_back(c);
            ++i;
            continue;
        }
        std::size_t n = next + (text[next] == '/' ? 1 : 0);
        std::string name;
        while (n < gt && std::isalnum(static_cast<unsigned char>(text[n]))) {
            name.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[n]))));
            ++n;
        }
        out.push_back(is_block_tag(name) ? '\n' : ' ');
        i = gt + 1;
    }
    return out;
}

std::string strip_controls(std::string_view text) {
    const std::u32string cps = util::decode_utf8_lossy(text);
    std::u32string out;
    out.reserve(cps.size());
    for (char32_t c : cps) {
        if (c == '\n' || c == '\t') {
            out.push_back(c);
            continue;
        }
        if (c < 0x20 || (c >= 0x7F && c < 0xA0) || c == util::kReplacementChar) continue;
        out.push_back(c);
    }
    return util::encode_utf8(out);
}

std::vector<std::string> split_paragraphs(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string p = collapse_whitespace(text.substr(start, end - start));
        if (!p.empty()) out.push_back(std::move(p));
        start = end + 1;
    }
    return out;
}

std::vector<std::string> split_sentences(std::string_view paragraph, std::u32string_view terminals) {
    const std::u32string cps = util::decode_utf8_lossy(paragraph);
    std::vector<std::string> out;
    std::size_t begin = 0;
    const auto emit = [&](std::size_t end) {
        std::string s = collapse_whitespace(util::encode_utf8(std::u32string_view(cps).substr(begin, end - begin)));
        if (!s.empty()) out.push_back(std::move(s));
        begin = end;
    };
    for (std::size_t i = 0; i < cps.size(); ++i) {
        if (!is_terminal(cps[i], terminals)) continue;
        std::size_t j = i + 1;
        while (j < cps.size() && is_closer(cps[j])) ++j;
        if (cps[i] >= 0x80 || j == cps.size() || is_space(cps[j])) {
            emit(j);
            i = j - 1;
        }
    }
    emit(cps.size());
    return out;
}

bool ends_with_terminal(std::string_view sentence, std::u32string_view terminals) {
    const std::u32string cps = util::decode_utf8_lossy(sentence);
    std::size_t n = cps.size();
    while (n > 0 && (is_space(cps[n - 1]) || is_closer(cps[n - 1]))) --n;
    return n > 0 && is_terminal(cps[n - 1], terminals);
}

std::string join_sentences(const std::vector<std::string>& sentences) {
    std::string out;
    for (std::size_t k = 0; k < sentences.size(); ++k) {
        if (k != 0) {
            const std::u32string prev = util::decode_utf8_lossy(sentences[k - 1]);
            std::size_t n = prev.size();
            while (n > 0 && is_closer(prev[n - 1])) --n;
            if (n == 0 || prev[n - 1] < 0x80) out.push_back(' ');
        }
        out += sentences[k];
    }
    return out;
}

std::vector<std::string> word_tokens(std::string_view text) {
    const std::u32string cps = util::decode_utf8_lossy(text);
    std::vector<std::string> out;
    std::string run;
    const auto flush = [&] {
        if (!run.empty()) out.push_back(std::move(run));
        run.clear();
    };
    for (char32_t c : cps) {
        if (c < 0x80) {
            if (std::isalnum(static_cast<int>(c))) {
                run.push_back(static_cast<char>(std::tolower(static_cast<int>(c))));
            } else {
                flush();
            }
            continue;
        }
        flush();
        if (is_space(c) || is_wide_punct(c) || c == util::kReplacementChar) continue;
        std::string tok;
        util::append_utf8(tok, c);
        out.push_back(std::move(tok));
    }
    flush();
    return out;
}

std::string normalize_for_dedup(std::string_view text) {
    std::string s = collapse_whitespace(text);
    for (char& c : s) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return s;
}

double tf_cosine(std::string_view a, std::string_view b) {
    std::map<std::string, double> ta, tb;
    for (auto& w : word_tokens(a)) ta[w] += 1.0;
    for (auto& w : word_tokens(b)) tb[w] += 1.0;
    if (ta.empty() || tb.empty()) return 0.0;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [w, c] : ta) {
        na += c * c;
        auto it = tb.find(w);
        if (it != tb.end()) dot += c * it->second;
    }
    for (const auto& [w, c] : tb) nb += c * c;
    return dot / std::sqrt(na * nb);  // exact 1 for identical integer counts
}

}  // namespace geb::corpus
