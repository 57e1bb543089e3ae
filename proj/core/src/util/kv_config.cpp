#include "geb/util/kv_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "geb/errors.hpp"

namespace geb::util {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) return buf;
    }
    return buf;
}

KvDoc KvDoc::parse(const std::string& text) {
    KvDoc doc;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        doc.values_[key] = trim(line.substr(eq + 1));
    }
    return doc;
}

KvDoc KvDoc::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string KvDoc::to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

void KvDoc::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config file: " + path.string());
    out << to_text();
}

void KvDoc::set(const std::string& key, double value) { values_[key] = format_double(value); }

std::optional<std::string> KvDoc::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string KvDoc::get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

double KvDoc::get_double(const std::string& key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    char* end = nullptr;
    const double d = std::strtod(v->c_str(), &end);
    if (end == v->c_str() || *end != '\0') throw ConfigError("config key '" + key + "' is not a number: " + *v);
    return d;
}

std::uint64_t KvDoc::get_uint(const std::string& key, std::uint64_t fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc{} || ptr != v->data() + v->size()) {
        throw ConfigError("config key '" + key + "' is not a non-negative integer: " + *v);
    }
    return out;
}

bool KvDoc::get_bool(const std::string& key, bool fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ConfigError("config key '" + key + "' is not a boolean: " + *v);
}

std::vector<std::string> KvDoc::get_list(const std::string& key, const std::vector<std::string>& fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(*v);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

KvDoc KvDoc::section(const std::string& prefix) const {
    KvDoc out;
    for (const auto& [k, v] : values_) {
        if (k.rfind(prefix, 0) == 0) out.values_[k.substr(prefix.size())] = v;
    }
    return out;
}

void KvDoc::merge(const KvDoc& other, const std::string& prefix) {
    for (const auto& [k, v] : other.values_) values_[prefix + k] = v;
}

}  // namespace geb::util
