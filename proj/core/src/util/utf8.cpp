#include "geb/util/utf8.hpp"

namespace geb::util {

namespace {

// Length of the valid sequence starting at `i`, or 0 if the lead byte is bad.
// `partial` receives how many bytes form the longest valid prefix when the
// sequence turns out to be invalid (at least 1).
std::size_t scan(std::string_view s, std::size_t i, char32_t& cp, std::size_t& partial) {
    const auto b = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
    const unsigned char c = b(i);
    partial = 1;
    if (c < 0x80) {
        cp = c;
        return 1;
    }
    std::size_t len = 0;
    unsigned char lo = 0x80, hi = 0xBF;
    if (c >= 0xC2 && c <= 0xDF) {
        len = 2;
        cp = c & 0x1F;
    } else if (c >= 0xE0 && c <= 0xEF) {
        len = 3;
        cp = c & 0x0F;
        if (c == 0xE0) lo = 0xA0;
        if (c == 0xED) hi = 0x9F;
    } else if (c >= 0xF0 && c <= 0xF4) {
        len = 4;
        cp = c & 0x07;
        if (c == 0xF0) lo = 0x90;
        if (c == 0xF4) hi = 0x8F;
    } else {
        return 0;
    }
    for (std::size_t k = 1; k < len; ++k) {
        if (i + k >= s.size()) return 0;
        const unsigned char t = b(i + k);
        const unsigned char tlo = k == 1 ? lo : 0x80;
        const unsigned char thi = k == 1 ? hi : 0xBF;
        if (t < tlo || t > thi) return 0;
        cp = (cp << 6) | (t & 0x3F);
        partial = k + 1;
    }
    return len;
}

}  // namespace

std::optional<std::u32string> decode_utf8(std::string_view bytes) {
    std::u32string out;
    out.reserve(bytes.size());
    for (std::size_t i = 0; i < bytes.size();) {
        char32_t cp = 0;
        std::size_t partial = 0;
        const std::size_t n = scan(bytes, i, cp, partial);
        if (n == 0) return std::nullopt;
        out.push_back(cp);
        i += n;
    }
    return out;
}

bool is_valid_utf8(std::string_view bytes) { return decode_utf8(bytes).has_value(); }

std::u32string decode_utf8_lossy(std::string_view bytes) {
    std::u32string out;
    out.reserve(bytes.size());
    for (std::size_t i = 0; i < bytes.size();) {
        char32_t cp = 0;
        std::size_t partial = 0;
        const std::size_t n = scan(bytes, i, cp, partial);
        if (n == 0) {
            out.push_back(kReplacementChar);
            i += partial;
        } else {
            out.push_back(cp);
            i += n;
        }
    }
    return out;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::string encode_utf8(std::u32string_view cps) {
    std::string out;
    out.reserve(cps.size());
    for (char32_t c : cps) append_utf8(out, c);
    return out;
}

std::string sanitize_utf8(std::string_view bytes) { return encode_utf8(decode_utf8_lossy(bytes)); }

}  // namespace geb::util
