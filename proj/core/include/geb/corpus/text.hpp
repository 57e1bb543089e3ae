#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace geb::corpus {

// Text helpers over UTF-8 input. Callers pass valid UTF-8; invalid bytes are
// read as U+FFFD.

std::size_t codepoint_length(std::string_view text);

// Trims and collapses runs of whitespace (ASCII and U+3000) to one space.
std::string collapse_whitespace(std::string_view text);

// Drops <script>/<style> blocks, comments and tags. Block-level tags become
// line breaks, other tags become spaces. Entities are left as written.
std::string strip_markup(std::string_view text);

// Removes C0/C1 control characters other than '\n' and '\t', and U+FFFD.
std::string strip_controls(std::string_view text);

// Non-empty trimmed lines.
std::vector<std::string> split_paragraphs(std::string_view text);

// Splits after a terminal character (plus any closing quotes or brackets)
// when whitespace or the end follows; non-ASCII terminals split
// unconditionally. Pieces are whitespace-collapsed; empty pieces vanish.
std::vector<std::string> split_sentences(std::string_view paragraph, std::u32string_view terminals);

// True if the last character, ignoring closing quotes/brackets, is terminal.
bool ends_with_terminal(std::string_view sentence, std::u32string_view terminals);

// Joins sentences; no separator after a non-ASCII terminal, one space otherwise.
std::string join_sentences(const std::vector<std::string>& sentences);

// Lowercased ASCII alphanumeric runs; every other non-space, non-punctuation
// character (e.g. each CJK ideograph) is a token on its own.
std::vector<std::string> word_tokens(std::string_view text);

// ASCII lowercase plus whitespace collapse; punctuation kept.
std::string normalize_for_dedup(std::string_view text);

// Cosine similarity of term-frequency vectors over word_tokens; 0 when
// either side has no tokens.
double tf_cosine(std::string_view a, std::string_view b);

}  // namespace geb::corpus
