#include "geb/ndops/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace geb::nd {

namespace {

enum class Broadcast { Same, Scalar, Row };

Broadcast broadcast_kind(const Shape& a, const Shape& b) {
    if (a == b) return Broadcast::Same;
    if (shape_numel(b) == 1 && b.size() == 1) return Broadcast::Scalar;
    if (b.size() == 1 && b[0] == a.back()) return Broadcast::Row;
    throw DimensionError("cannot broadcast " + shape_str(b) + " onto " + shape_str(a));
}

template <typename T, typename Op>
Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, Op op) {
    const Broadcast kind = broadcast_kind(a.shape(), b.shape());
    Tensor<T> out(a.shape());
    const std::size_t n = a.numel();
    switch (kind) {
        case Broadcast::Same:
            for (std::size_t i = 0; i < n; ++i) out[i] = op(a[i], b[i]);
            break;
        case Broadcast::Scalar: {
            const T s = b[0];
            for (std::size_t i = 0; i < n; ++i) out[i] = op(a[i], s);
            break;
        }
        case Broadcast::Row: {
            const std::size_t w = b.numel();
            for (std::size_t i = 0; i < n; ++i) out[i] = op(a[i], b[i % w]);
            break;
        }
    }
    return out;
}

void require_rank2(const Shape& s, const char* what) {
    if (s.size() != 2) throw DimensionError(std::string(what) + " expects a matrix, got " + shape_str(s));
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Trans ta, Trans tb) {
    require_rank2(a.shape(), "matmul");
    require_rank2(b.shape(), "matmul");
    const bool at = ta == Trans::Yes;
    const bool bt = tb == Trans::Yes;
    const std::size_t m = at ? a.dim(1) : a.dim(0);
    const std::size_t k = at ? a.dim(0) : a.dim(1);
    const std::size_t kb = bt ? b.dim(1) : b.dim(0);
    const std::size_t n = bt ? b.dim(0) : b.dim(1);
    if (k != kb) {
        throw DimensionError("matmul inner extents differ: " + shape_str(a.shape()) + (at ? "^T" : "") +
                             " · " + shape_str(b.shape()) + (bt ? "^T" : ""));
    }
    if (m == 0) return Tensor<T>(Shape{0, n});
    Tensor<T> c(Shape{m, n});
    const T* A = a.raw();
    const T* B = b.raw();
    T* C = c.raw();
    const std::size_t lda = a.dim(1);
    const std::size_t ldb = b.dim(1);

    if (!at && !bt) {
        for (std::size_t i = 0; i < m; ++i) {
            T* crow = C + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const T av = A[i * lda + p];
                const T* brow = B + p * ldb;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else if (!at && bt) {
        for (std::size_t i = 0; i < m; ++i) {
            const T* arow = A + i * lda;
            for (std::size_t j = 0; j < n; ++j) {
                const T* brow = B + j * ldb;
                T acc{0};
                for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
                C[i * n + j] = acc;
            }
        }
    } else if (at && !bt) {
        for (std::size_t p = 0; p < k; ++p) {
            const T* arow = A + p * lda;
            const T* brow = B + p * ldb;
            for (std::size_t i = 0; i < m; ++i) {
                const T av = arow[i];
                T* crow = C + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                T acc{0};
                for (std::size_t p = 0; p < k; ++p) acc += A[p * lda + i] * B[j * ldb + p];
                C[i * n + j] = acc;
            }
        }
    }
    return c;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return elementwise(a, b, [](T x, T y) { return x + y; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return elementwise(a, b, [](T x, T y) { return x * y; });
}

template <typename T>
Tensor<T> reduce_to(const Tensor<T>& g, const Shape& target) {
    switch (broadcast_kind(g.shape(), target)) {
        case Broadcast::Same:
            return g;
        case Broadcast::Scalar: {
            T acc{0};
            for (T v : g.data()) acc += v;
            return Tensor<T>::scalar(acc);
        }
        case Broadcast::Row: {
            Tensor<T> out(target);
            const std::size_t w = out.numel();
            for (std::size_t i = 0; i < g.numel(); ++i) out[i % w] += g[i];
            return out;
        }
    }
    return g;
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const T z = x[i];
        out[i] = z / (T{1} + std::exp(-z));
    }
    return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
    if (axis >= x.rank()) {
        throw DimensionError("softmax axis " + std::to_string(axis) + " out of range for " +
                             shape_str(x.shape()));
    }
    if (!all_finite(x)) throw NumericError("softmax received non-finite input");
    const Shape& s = x.shape();
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t len = s[axis];
    Tensor<T> out(s);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            T mx = x[base];
            for (std::size_t t = 1; t < len; ++t) mx = std::max(mx, x[base + t * inner]);
            T sum{0};
            for (std::size_t t = 0; t < len; ++t) {
                const T e = std::exp(x[base + t * inner] - mx);
                out[base + t * inner] = e;
                sum += e;
            }
            for (std::size_t t = 0; t < len; ++t) out[base + t * inner] /= sum;
        }
    }
    return out;
}

template <typename T>
Tensor<T> rms_normalize(const Tensor<T>& x, double eps) {
    const std::size_t w = x.shape().back();
    const std::size_t rows = x.numel() / w;
    Tensor<T> out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* src = x.raw() + r * w;
        T* dst = out.raw() + r * w;
        T ss{0};
        for (std::size_t i = 0; i < w; ++i) ss += src[i] * src[i];
        const T inv = T{1} / std::sqrt(ss / static_cast<T>(w) + static_cast<T>(eps));
        for (std::size_t i = 0; i < w; ++i) dst[i] = src[i] * inv;
    }
    return out;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const TokenId> ids) {
    require_rank2(table.shape(), "gather_rows");
    const std::size_t w = table.cols();
    if (ids.empty()) return Tensor<T>(Shape{0, w});
    Tensor<T> out(Shape{ids.size(), w});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= table.rows()) {
            throw VocabularyError("token id " + std::to_string(ids[i]) + " outside table of " +
                                  std::to_string(table.rows()) + " rows");
        }
        std::copy_n(table.raw() + ids[i] * w, w, out.raw() + i * w);
    }
    return out;
}

template <typename T>
T log_softmax_at(std::span<const T> row, std::size_t index) {
    T mx = row[0];
    for (T v : row) mx = std::max(mx, v);
    T sum{0};
    for (T v : row) sum += std::exp(v - mx);
    return row[index] - mx - std::log(sum);
}

template <typename T>
T cross_entropy(const Tensor<T>& logits, std::span<const TokenId> targets, std::span<const T> weights,
                Reduction reduction) {
    require_rank2(logits.shape(), "cross_entropy");
    if (targets.size() != logits.rows() || weights.size() != logits.rows()) {
        throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets and " +
                             std::to_string(weights.size()) + " weights for logits " +
                             shape_str(logits.shape()));
    }
    if (!all_finite(logits)) throw NumericError("cross_entropy received non-finite logits");
    T total{0};
    T wsum{0};
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        if (targets[r] >= logits.cols()) {
            throw VocabularyError("target id " + std::to_string(targets[r]) + " outside " +
                                  std::to_string(logits.cols()) + " classes");
        }
        if (weights[r] == T{0}) continue;
        total -= weights[r] * log_softmax_at(logits.row(r), targets[r]);
        wsum += weights[r];
    }
    if (reduction == Reduction::Sum) return total;
    if (wsum == T{0}) throw ArgumentError("cross_entropy: mean over zero total weight");
    return total / wsum;
}

template <typename T>
bool all_finite(const Tensor<T>& x) {
    return std::all_of(x.data().begin(), x.data().end(), [](T v) { return std::isfinite(v); });
}

#define GEB_INSTANTIATE_OPS(T)                                                                        \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, Trans, Trans);                      \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                       \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                       \
    template Tensor<T> reduce_to(const Tensor<T>&, const Shape&);                                     \
    template Tensor<T> silu(const Tensor<T>&);                                                        \
    template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                        \
    template Tensor<T> rms_normalize(const Tensor<T>&, double);                                       \
    template Tensor<T> gather_rows(const Tensor<T>&, std::span<const TokenId>);                       \
    template T cross_entropy(const Tensor<T>&, std::span<const TokenId>, std::span<const T>, Reduction); \
    template T log_softmax_at(std::span<const T>, std::size_t);                                       \
    template bool all_finite(const Tensor<T>&);

GEB_INSTANTIATE_OPS(float)
GEB_INSTANTIATE_OPS(double)

#undef GEB_INSTANTIATE_OPS

}  // namespace geb::nd
