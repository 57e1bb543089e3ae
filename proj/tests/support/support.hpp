#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "geb/corpus/pipeline.hpp"
#include "geb/model/config.hpp"
#include "geb/model/params.hpp"
#include "geb/train/trainer.hpp"

namespace geb::testutil {

// Source tree fixtures; set by the build.
std::filesystem::path fixture_path(const std::string& relative);

// vocab 64, hidden 16, ffn 48, 4 heads, 2 kv groups, 2 layers.
model::ModelConfig toy_config();

// Model and data settings shared by the training drills.
train::TrainConfig drill_config(std::size_t steps = 300);

// Deterministic English-like prose of roughly `bytes` bytes drawn from a
// small grammar, so a toy model can learn it within a few hundred steps.
std::string synthetic_text(std::size_t bytes, std::uint64_t seed);

// Byte-level ids (byte + 4) of `text`.
std::vector<nd::TokenId> byte_ids(const std::string& text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

// Planted-violation shards (web, forum) and the reference model trained on
// the fixture reference text with `cfg`'s n-gram settings.
std::vector<corpus::Shard> planted_shards();
corpus::NgramModel planted_reference(const corpus::PipelineConfig& cfg);

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
   public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

   private:
    std::filesystem::path path_;
};

// Parameters for finite-difference checks: matrices at std 0.3 and gains
// spread over [0.5, 1.5], so every tensor's gradient sits well above
// rounding noise (at the 0.02 init scale the query gradients are ~1e-9).
model::ModelParams<double> gradcheck_params(const model::ModelConfig& cfg, std::uint64_t seed);

// ||a - n|| / max(||a||, ||n||); 0 when both vanish.
double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

// Central differences of `f` with respect to every entry of every parameter.
using ParamLoss = std::function<double(const model::ModelParams<double>&)>;
nd::GradMap<double> numeric_gradients(model::ModelParams<double> params, const ParamLoss& f, double h = 1e-5);

// Causal grouped-query attention written as explicit per-head,
// per-position loops, independent of the tape implementation.
nd::TensorD reference_attention(const nd::TensorD& x, const model::LayerParams<double>& layer,
                                const model::ModelConfig& cfg, std::size_t start_pos = 0);

template <typename T>
double max_abs_diff(const nd::Tensor<T>& a, const nd::Tensor<T>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    }
    return m;
}

}  // namespace geb::testutil
