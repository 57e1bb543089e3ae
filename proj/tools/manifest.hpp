#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "geb/util/kv_config.hpp"

namespace geb::cli {

struct RunManifest {
    std::string command;
    util::KvDoc config;  // resolved snapshot, enough to rerun
    std::vector<std::string> inputs;
    std::filesystem::path out_dir;
    std::vector<std::string> outputs;  // file names relative to out_dir
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::string started_at;
    std::string finished_at;
    std::string status = "ok";
    std::string error;

    // Checksums every listed output, then writes run_manifest.json through a
    // temporary file.
    void write() const;
};

// UTC, ISO 8601, second resolution.
std::string utc_timestamp();

}  // namespace geb::cli
