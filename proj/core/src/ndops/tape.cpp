#include "geb/ndops/tape.hpp"

#include <cmath>

namespace geb::nd {

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
    nodes_.push_back(Node{std::move(value), {}, {}, false, {}, std::nullopt});
    return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::parameter(std::string name, Tensor<T> value) {
    nodes_.push_back(Node{std::move(value), {}, {}, record_, std::move(name), std::nullopt});
    return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::push(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward) {
    bool needs = false;
    if (record_) {
        for (std::size_t in : inputs) {
            if (in >= nodes_.size()) throw TracingError("node input does not precede it on the tape");
            needs = needs || nodes_[in].requires_grad;
        }
    }
    if (!needs) backward = nullptr;
    nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward), needs, {}, std::nullopt});
    return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
void Tape<T>::accumulate(std::size_t id, const Tensor<T>& g) {
    Node& node = nodes_.at(id);
    if (!node.requires_grad) return;
    if (g.shape() != node.value.shape()) {
        throw DimensionError("gradient " + shape_str(g.shape()) + " for value " + shape_str(node.value.shape()));
    }
    if (!node.grad) {
        node.grad = g;
        return;
    }
    T* dst = node.grad->raw();
    const T* src = g.raw();
    for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
}

template <typename T>
GradMap<T> Tape<T>::backward(Var<T> loss) {
    if (loss.tape != this) throw TracingError("backward on a value from another tape");
    if (!record_) throw TracingError("backward on a tape that was not recording");
    if (loss.id >= nodes_.size()) throw TracingError("backward on a released tape");
    if (nodes_[loss.id].value.numel() != 1) {
        throw TracingError("backward requires a scalar loss, got " + shape_str(nodes_[loss.id].value.shape()));
    }
    GradMap<T> grads;
    if (nodes_[loss.id].requires_grad) {
        nodes_[loss.id].grad = Tensor<T>(nodes_[loss.id].value.shape(), T{1});
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& node = nodes_[i];
            if (!node.grad) continue;
            if (node.backward) node.backward(*this, *node.grad);
            if (!node.param_name.empty()) {
                auto it = grads.find(node.param_name);
                if (it == grads.end()) {
                    grads.emplace(node.param_name, std::move(*node.grad));
                } else {
                    T* dst = it->second.raw();
                    for (std::size_t k = 0; k < it->second.numel(); ++k) dst[k] += (*node.grad)[k];
                }
            }
            node.grad.reset();
        }
    }
    nodes_.clear();
    return grads;
}

namespace {

template <typename T>
Tape<T>& common_tape(Var<T> a, Var<T> b) {
    if (a.tape == nullptr || a.tape != b.tape) throw TracingError("operands live on different tapes");
    return *a.tape;
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, Trans ta, Trans tb) {
    Tape<T>& tape = common_tape(a, b);
    Tensor<T> out = matmul(a.value(), b.value(), ta, tb);
    return tape.push(std::move(out), {a.id, b.id},
                     [ia = a.id, ib = b.id, ta, tb](Tape<T>& t, const Tensor<T>& g) {
                         const Tensor<T>& av = t.value(ia);
                         const Tensor<T>& bv = t.value(ib);
                         const bool at = ta == Trans::Yes;
                         const bool bt = tb == Trans::Yes;
                         if (t.requires_grad(ia)) {
                             if (!at) {
                                 t.accumulate(ia, matmul(g, bv, Trans::No, bt ? Trans::No : Trans::Yes));
                             } else {
                                 t.accumulate(ia, bt ? matmul(bv, g, Trans::Yes, Trans::Yes)
                                                     : matmul(bv, g, Trans::No, Trans::Yes));
                             }
                         }
                         if (t.requires_grad(ib)) {
                             if (!bt) {
                                 t.accumulate(ib, matmul(av, g, at ? Trans::No : Trans::Yes, Trans::No));
                             } else {
                                 t.accumulate(ib, at ? matmul(g, av, Trans::Yes, Trans::Yes)
                                                     : matmul(g, av, Trans::Yes, Trans::No));
                             }
                         }
                     });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    Tape<T>& tape = common_tape(a, b);
    Tensor<T> out = add(a.value(), b.value());
    return tape.push(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Tape<T>& t, const Tensor<T>& g) {
        t.accumulate(ia, g);
        if (t.requires_grad(ib)) t.accumulate(ib, reduce_to(g, t.value(ib).shape()));
    });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    Tape<T>& tape = common_tape(a, b);
    Tensor<T> out = mul(a.value(), b.value());
    return tape.push(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](Tape<T>& t, const Tensor<T>& g) {
        if (t.requires_grad(ia)) t.accumulate(ia, mul(g, t.value(ib)));
        if (t.requires_grad(ib)) t.accumulate(ib, reduce_to(mul(g, t.value(ia)), t.value(ib).shape()));
    });
}

template <typename T>
Var<T> silu(Var<T> x) {
    Tensor<T> out = silu(x.value());
    return x.tape->push(std::move(out), {x.id}, [ix = x.id](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& z = t.value(ix);
        Tensor<T> dz(z.shape());
        for (std::size_t i = 0; i < z.numel(); ++i) {
            const T s = T{1} / (T{1} + std::exp(-z[i]));
            dz[i] = g[i] * s * (T{1} + z[i] * (T{1} - s));
        }
        t.accumulate(ix, dz);
    });
}

template <typename T>
Var<T> softmax(Var<T> x, std::size_t axis) {
    Tensor<T> out = softmax(x.value(), axis);
    Tape<T>& tape = *x.tape;
    const std::size_t self = tape.size();
    return tape.push(std::move(out), {x.id}, [ix = x.id, self, axis](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& y = t.value(self);
        const Shape& s = y.shape();
        std::size_t outer = 1;
        std::size_t inner = 1;
        for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
        for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
        const std::size_t len = s[axis];
        Tensor<T> dx(s);
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                T dot{0};
                for (std::size_t k = 0; k < len; ++k) dot += g[base + k * inner] * y[base + k * inner];
                for (std::size_t k = 0; k < len; ++k) {
                    const std::size_t idx = base + k * inner;
                    dx[idx] = y[idx] * (g[idx] - dot);
                }
            }
        }
        t.accumulate(ix, dx);
    });
}

template <typename T>
Var<T> rms_normalize(Var<T> x, double eps) {
    Tensor<T> out = rms_normalize(x.value(), eps);
    return x.tape->push(std::move(out), {x.id}, [ix = x.id, eps](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& xv = t.value(ix);
        const std::size_t w = xv.shape().back();
        const std::size_t rows = xv.numel() / w;
        Tensor<T> dx(xv.shape());
        for (std::size_t r = 0; r < rows; ++r) {
            const T* xs = xv.raw() + r * w;
            const T* gs = g.raw() + r * w;
            T ss{0};
            T gx{0};
            for (std::size_t i = 0; i < w; ++i) {
                ss += xs[i] * xs[i];
                gx += gs[i] * xs[i];
            }
            const T inv = T{1} / std::sqrt(ss / static_cast<T>(w) + static_cast<T>(eps));
            const T coef = inv * inv * inv * gx / static_cast<T>(w);
            for (std::size_t i = 0; i < w; ++i) dx.raw()[r * w + i] = gs[i] * inv - xs[i] * coef;
        }
        t.accumulate(ix, dx);
    });
}

template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const TokenId> ids) {
    Tensor<T> out = gather_rows(table.value(), ids);
    std::vector<TokenId> idv(ids.begin(), ids.end());
    return table.tape->push(std::move(out), {table.id},
                            [it = table.id, idv = std::move(idv)](Tape<T>& t, const Tensor<T>& g) {
                                const Tensor<T>& tv = t.value(it);
                                const std::size_t w = tv.cols();
                                Tensor<T> dt(tv.shape());
                                for (std::size_t i = 0; i < idv.size(); ++i) {
                                    T* dst = dt.raw() + idv[i] * w;
                                    const T* src = g.raw() + i * w;
                                    for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
                                }
                                t.accumulate(it, dt);
                            });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const TokenId> targets, std::span<const T> weights,
                     Reduction reduction) {
    const T loss = cross_entropy(logits.value(), targets, weights, reduction);
    T norm{1};
    if (reduction == Reduction::Mean) {
        norm = T{0};
        for (T w : weights) norm += w;
    }
    std::vector<TokenId> tv(targets.begin(), targets.end());
    std::vector<T> wv(weights.begin(), weights.end());
    return logits.tape->push(
        Tensor<T>::scalar(loss), {logits.id},
        [il = logits.id, tv = std::move(tv), wv = std::move(wv), norm](Tape<T>& t, const Tensor<T>& g) {
            const Tensor<T>& lv = t.value(il);
            const std::size_t v = lv.cols();
            Tensor<T> dl(lv.shape());
            const T up = g[0] / norm;
            for (std::size_t r = 0; r < lv.rows(); ++r) {
                if (wv[r] == T{0}) continue;
                const T* row = lv.raw() + r * v;
                T mx = row[0];
                for (std::size_t c = 1; c < v; ++c) mx = std::max(mx, row[c]);
                T sum{0};
                for (std::size_t c = 0; c < v; ++c) sum += std::exp(row[c] - mx);
                T* drow = dl.raw() + r * v;
                const T k = up * wv[r];
                for (std::size_t c = 0; c < v; ++c) drow[c] = k * std::exp(row[c] - mx) / sum;
                drow[tv[r]] -= k;
            }
            t.accumulate(il, dl);
        });
}

#define GEB_INSTANTIATE_TAPE(T)                                                                      \
    template class Tape<T>;                                                                          \
    template Var<T> matmul(Var<T>, Var<T>, Trans, Trans);                                            \
    template Var<T> add(Var<T>, Var<T>);                                                             \
    template Var<T> mul(Var<T>, Var<T>);                                                             \
    template Var<T> silu(Var<T>);                                                                    \
    template Var<T> softmax(Var<T>, std::size_t);                                                    \
    template Var<T> rms_normalize(Var<T>, double);                                                   \
    template Var<T> gather_rows(Var<T>, std::span<const TokenId>);                                   \
    template Var<T> cross_entropy(Var<T>, std::span<const TokenId>, std::span<const T>, Reduction);

GEB_INSTANTIATE_TAPE(float)
GEB_INSTANTIATE_TAPE(double)

#undef GEB_INSTANTIATE_TAPE

}  // namespace geb::nd
