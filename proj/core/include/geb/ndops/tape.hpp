#pragma once

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geb/ndops/ops.hpp"
#include "geb/ndops/tensor.hpp"

namespace geb::nd {

template <typename T>
class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
// it came from is alive and has not been consumed by backward().
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    std::size_t id = 0;

    const Tensor<T>& value() const;
    const Shape& shape() const { return value().shape(); }
};

// Gradients keyed by parameter name, ordered for stable iteration.
template <typename T>
using GradMap = std::map<std::string, Tensor<T>>;

// Reverse-mode record of executed primitives. Nodes are appended in
// execution order, so every node's inputs precede it.
//
// A tape built with record = false keeps forward values only; backward() on
// it throws TracingError.
template <typename T>
class Tape {
   public:
    // Receives the gradient of the node's output and accumulates into inputs.
    using BackwardFn = std::function<void(Tape&, const Tensor<T>&)>;

    explicit Tape(bool record = true) : record_(record) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return record_; }
    std::size_t size() const { return nodes_.size(); }

    Var<T> constant(Tensor<T> value);
    Var<T> parameter(std::string name, Tensor<T> value);

    // Appends a derived node. `backward` may be empty when no input needs a
    // gradient; it is dropped automatically on non-recording tapes.
    Var<T> push(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward);

    const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

    // Adds `g` into the gradient buffer of node `id` (no-op for constants).
    void accumulate(std::size_t id, const Tensor<T>& g);

    // Gradients of scalar `loss` with respect to every reached parameter.
    // Consumes the tape: all nodes are released afterwards.
    GradMap<T> backward(Var<T> loss);

   private:
    struct Node {
        Tensor<T> value;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
        std::string param_name;
        std::optional<Tensor<T>> grad;
    };

    bool record_;
    // deque: references to earlier values stay valid while new nodes append.
    std::deque<Node> nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
    if (tape == nullptr) throw TracingError("use of an unbound Var");
    return tape->value(id);
}

// Traced primitives. Each records its own backward rule.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, Trans ta = Trans::No, Trans tb = Trans::No);
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> silu(Var<T> x);
template <typename T>
Var<T> softmax(Var<T> x, std::size_t axis);
template <typename T>
Var<T> rms_normalize(Var<T> x, double eps);
template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const TokenId> ids);
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const TokenId> targets, std::span<const T> weights,
                     Reduction reduction);

// Compositions of the primitives above.
template <typename T>
Var<T> scale(Var<T> x, T factor) {
    return mul(x, x.tape->constant(Tensor<T>::scalar(factor)));
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    return add(a, scale(b, T{-1}));
}

// Sum of all entries of a matrix, as a 1x1 value.
template <typename T>
Var<T> sum_all(Var<T> x) {
    const Tensor<T>& v = x.value();
    if (v.rank() != 2) throw DimensionError("sum_all expects a matrix, got " + shape_str(v.shape()));
    Tape<T>& tape = *x.tape;
    Var<T> left = tape.constant(Tensor<T>(Shape{1, v.rows()}, T{1}));
    Var<T> right = tape.constant(Tensor<T>(Shape{v.cols(), 1}, T{1}));
    return matmul(matmul(left, x), right);
}

// Columns [begin, begin + count) of a matrix, expressed as a product with a
// 0/1 selector so slicing stays within the primitive set.
template <typename T>
Var<T> select_cols(Var<T> x, std::size_t begin, std::size_t count) {
    const std::size_t w = x.value().cols();
    Tensor<T> sel(Shape{w, count});
    for (std::size_t i = 0; i < count; ++i) sel.at(begin + i, i) = T{1};
    return matmul(x, x.tape->constant(std::move(sel)));
}

// Places a narrow matrix into columns [begin, begin + cols(x)) of a zero
// matrix `width` wide.
template <typename T>
Var<T> place_cols(Var<T> x, std::size_t begin, std::size_t width) {
    const std::size_t count = x.value().cols();
    Tensor<T> sel(Shape{width, count});
    for (std::size_t i = 0; i < count; ++i) sel.at(begin + i, i) = T{1};
    return matmul(x, x.tape->constant(std::move(sel)), Trans::No, Trans::Yes);
}

}  // namespace geb::nd
