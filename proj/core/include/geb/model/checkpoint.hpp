#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "geb/model/config.hpp"
#include "geb/model/params.hpp"
#include "geb/util/kv_config.hpp"

namespace geb::model {

// Binary container:
//   "GEBCKPT\0" | u32 version | u32 len + config text (KvDoc) |
//   u32 len + metadata text | u32 tensor count |
//   per tensor: u32 len + name | u32 rank | u64 extents[rank] | f32 data[]
// All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    util::KvDoc config;
    std::string metadata;
    std::vector<std::pair<std::string, nd::TensorF>> tensors;

    const nd::TensorF* find(const std::string& name) const;
};

// Writes through a temporary file and renames into place.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Appends every model tensor in declaration order, names prefixed.
void append_params(Checkpoint& ckpt, const ModelParams<float>& params, const std::string& prefix = "");

// Rebuilds parameters from tensors named `prefix + <param name>`.
ModelParams<float> extract_params(const Checkpoint& ckpt, const ModelConfig& cfg, const std::string& prefix = "");

void save_model(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams<float>& params);
std::pair<ModelConfig, ModelParams<float>> load_model(const std::filesystem::path& path);

}  // namespace geb::model
