#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace geb::util {

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ull;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ull;

constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = kFnvOffset) {
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= kFnvPrime;
    }
    return h;
}

// Streams the file; throws IoError if it cannot be read.
std::uint64_t fnv1a64_file(const std::filesystem::path& path);

// 16 lowercase hex digits.
std::string hex64(std::uint64_t v);

}  // namespace geb::util
