#include "geb/train/data.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "geb/errors.hpp"

namespace geb::train {

namespace {

// Fisher-Yates over a raw 64-bit generator; avoids relying on the standard
// library's unspecified shuffle/distribution algorithms.
template <typename V>
void shuffle_with(V& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace

DataPlan make_data_plan(std::span<const TokenId> tokens, std::size_t batch_size, std::size_t seq_len,
                        std::uint64_t seed, double reserve_fraction) {
    if (batch_size == 0 || seq_len == 0) throw ArgumentError("batch_size and seq_len must be positive");
    if (!(reserve_fraction >= 0.0 && reserve_fraction < 1.0)) {
        throw ArgumentError("reserve_fraction must lie in [0, 1)");
    }
    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + seq_len + 1 <= tokens.size(); s += seq_len) starts.push_back(s);
    std::mt19937_64 rng(seed);
    shuffle_with(starts, rng);

    std::vector<Batch> batches;
    for (std::size_t b = 0; (b + 1) * batch_size <= starts.size(); ++b) {
        Batch batch;
        batch.source_index = b;
        for (std::size_t r = 0; r < batch_size; ++r) {
            const std::size_t s = starts[b * batch_size + r];
            batch.inputs.emplace_back(tokens.begin() + static_cast<std::ptrdiff_t>(s),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(s + seq_len));
            batch.targets.emplace_back(tokens.begin() + static_cast<std::ptrdiff_t>(s + 1),
                                       tokens.begin() + static_cast<std::ptrdiff_t>(s + seq_len + 1));
        }
        batches.push_back(std::move(batch));
    }

    DataPlan plan;
    std::size_t reserve = 0;
    if (batches.size() >= 2) {
        reserve = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::floor(reserve_fraction * static_cast<double>(batches.size()))));
        if (reserve_fraction == 0.0) reserve = 0;
    }
    const std::size_t n_train = batches.size() - reserve;
    plan.train.assign(std::make_move_iterator(batches.begin()),
                      std::make_move_iterator(batches.begin() + static_cast<std::ptrdiff_t>(n_train)));
    plan.reserve.assign(std::make_move_iterator(batches.begin() + static_cast<std::ptrdiff_t>(n_train)),
                        std::make_move_iterator(batches.end()));
    return plan;
}

Batch shuffle_labels(const Batch& batch, std::uint64_t seed) {
    Batch out = batch;
    std::mt19937_64 rng(seed);
    for (auto& row : out.targets) shuffle_with(row, rng);
    return out;
}

}  // namespace geb::train
