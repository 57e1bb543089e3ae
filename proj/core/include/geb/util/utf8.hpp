#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace geb::util {

inline constexpr char32_t kReplacementChar = 0xFFFD;

// Strict decoding: rejects overlongs, surrogates and values above U+10FFFF.
std::optional<std::u32string> decode_utf8(std::string_view bytes);

bool is_valid_utf8(std::string_view bytes);

// Decodes with every maximal invalid subsequence replaced by U+FFFD.
std::u32string decode_utf8_lossy(std::string_view bytes);

void append_utf8(std::string& out, char32_t cp);
std::string encode_utf8(std::u32string_view cps);

// Same text with invalid sequences replaced by U+FFFD.
std::string sanitize_utf8(std::string_view bytes);

}  // namespace geb::util
