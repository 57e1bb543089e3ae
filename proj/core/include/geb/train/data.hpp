#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "geb/ndops/ops.hpp"

namespace geb::train {

using nd::TokenId;

// batch x seq_len inputs with their next-token targets.
struct Batch {
    std::vector<std::vector<TokenId>> inputs;
    std::vector<std::vector<TokenId>> targets;
    std::size_t source_index = 0;  // position in the shuffled batch order
};

struct DataPlan {
    std::vector<Batch> train;
    std::vector<Batch> reserve;  // held out for batch replacement
};

// Cuts the token stream into windows of seq_len + 1 (stride seq_len),
// shuffles them with `seed`, groups them into batches and holds out the last
// `reserve_fraction` of batches (at least one when two or more exist).
DataPlan make_data_plan(std::span<const TokenId> tokens, std::size_t batch_size, std::size_t seq_len,
                        std::uint64_t seed, double reserve_fraction = 0.01);

// Fault injection: shuffles every row's targets, leaving inputs intact.
Batch shuffle_labels(const Batch& batch, std::uint64_t seed);

}  // namespace geb::train
