#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace geb::util {

// Human-readable `key = value` document. Lines whose first non-blank
// character is '#' are comments; blank lines are ignored; keys are unique
// and kept in sorted order when written back.
class KvDoc {
   public:
    KvDoc() = default;

    static KvDoc parse(const std::string& text);
    static KvDoc load(const std::filesystem::path& path);

    std::string to_text() const;
    void save(const std::filesystem::path& path) const;

    bool contains(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& entries() const { return values_; }

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    void set(const std::string& key, const char* value) { values_[key] = value; }
    void set(const std::string& key, double value);
    void set(const std::string& key, std::int64_t value) { values_[key] = std::to_string(value); }
    void set(const std::string& key, std::uint64_t value) { values_[key] = std::to_string(value); }
    void set(const std::string& key, int value) { values_[key] = std::to_string(value); }
    void set(const std::string& key, bool value) { values_[key] = value ? "true" : "false"; }

    std::optional<std::string> get(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // Comma-separated list; empty string yields an empty list.
    std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

    // Entries whose key starts with `prefix`, with the prefix removed.
    KvDoc section(const std::string& prefix) const;
    void merge(const KvDoc& other, const std::string& prefix = "");

   private:
    std::map<std::string, std::string> values_;
};

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace geb::util
