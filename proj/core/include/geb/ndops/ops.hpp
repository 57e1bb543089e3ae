#pragma once

#include <cstdint>
#include <span>

#include "geb/ndops/tensor.hpp"

// Untraced value kernels. The traced primitives in tape.hpp call these for
// their forward values, and the inference engine calls them directly.
namespace geb::nd {

using TokenId = std::uint32_t;

enum class Trans { No, Yes };

enum class Reduction { Mean, Sum };

// op(a) · op(b) for rank-2 operands.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Trans ta = Trans::No, Trans tb = Trans::No);

// Elementwise with limited broadcasting: `b` may match `a` exactly, be a
// single scalar, or be a vector matching the last extent of `a`.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

// Sums `g` (shaped like the full operand) down to `target` using the same
// broadcasting rules as add/mul.
template <typename T>
Tensor<T> reduce_to(const Tensor<T>& g, const Shape& target);

template <typename T>
Tensor<T> silu(const Tensor<T>& x);

// Max-subtracted softmax along `axis`. Throws NumericError on non-finite input.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

// x / sqrt(mean(x^2) + eps) over the last axis.
template <typename T>
Tensor<T> rms_normalize(const Tensor<T>& x, double eps);

// Rows of `table` selected by `ids`; result is ids.size() x table.cols().
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const TokenId> ids);

// Weighted next-token cross-entropy over the rows of `logits`.
// Mean divides by the weight total; Sum does not.
template <typename T>
T cross_entropy(const Tensor<T>& logits, std::span<const TokenId> targets, std::span<const T> weights,
                Reduction reduction);

// log softmax of a single row, evaluated at `index`.
template <typename T>
T log_softmax_at(std::span<const T> row, std::size_t index);

template <typename T>
bool all_finite(const Tensor<T>& x);

}  // namespace geb::nd
