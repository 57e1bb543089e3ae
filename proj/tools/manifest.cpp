#include "manifest.hpp"

#include <ctime>
#include <fstream>

#include <json.hpp>

#include "geb/errors.hpp"
#include "geb/util/hash.hpp"

namespace geb::cli {

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void RunManifest::write() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["status"] = status;
    if (!error.empty()) j["error"] = error;
    j["seed"] = seed;
    j["threads"] = threads;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    j["inputs"] = inputs;
    j["out_dir"] = out_dir.string();
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config.entries()) cfg[k] = v;
    j["config"] = cfg;
    nlohmann::ordered_json artifacts = nlohmann::ordered_json::object();
    for (const auto& name : outputs) {
        const auto path = out_dir / name;
        if (std::filesystem::exists(path)) artifacts[name] = "fnv1a64:" + util::hex64(util::fnv1a64_file(path));
    }
    j["artifacts"] = artifacts;

    std::filesystem::create_directories(out_dir);
    const auto final_path = out_dir / "run_manifest.json";
    const auto tmp = out_dir / "run_manifest.json.tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << j.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, final_path);
}

}  // namespace geb::cli
