#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "pxrl/common.hpp"
#include "pxrl/kernels.hpp"

namespace pxrl {

// Dense row-major tensor taking part in reverse-mode differentiation.
// Parameters and activations are float; the same code instantiates with
// double for finite-difference verification.
template <class T>
struct TensorImpl {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;  // same length as values iff requires_grad
    bool requires_grad = false;

    long numel() const { return static_cast<long>(values.size()); }

    void zero_grad() {
        if (requires_grad) std::fill(grad.begin(), grad.end(), T(0));
    }
};

template <class T>
using TensorPtr = std::shared_ptr<TensorImpl<T>>;

template <class T>
TensorPtr<T> make_tensor(Shape shape, bool requires_grad = false) {
    auto t = std::make_shared<TensorImpl<T>>();
    const long n = numel_of(shape);
    if (n <= 0) throw ShapeError("make_tensor: non-positive shape " + shape_str(shape));
    t->shape = std::move(shape);
    t->values.assign(static_cast<size_t>(n), T(0));
    t->requires_grad = requires_grad;
    if (requires_grad) t->grad.assign(static_cast<size_t>(n), T(0));
    return t;
}

template <class T>
TensorPtr<T> make_tensor(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (numel_of(shape) != static_cast<long>(values.size()))
        throw ShapeError("make_tensor: " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
    auto t = std::make_shared<TensorImpl<T>>();
    t->shape = std::move(shape);
    t->values = std::move(values);
    t->requires_grad = requires_grad;
    if (requires_grad) t->grad.assign(t->values.size(), T(0));
    return t;
}

template <class T>
TensorPtr<T> make_tensor(Shape shape, std::initializer_list<T> values, bool requires_grad = false) {
    return make_tensor<T>(std::move(shape), std::vector<T>(values), requires_grad);
}

// Detached copy of the values (never receives gradient).
template <class T>
TensorPtr<T> constant_like(const TensorPtr<T>& src) {
    auto t = std::make_shared<TensorImpl<T>>();
    t->shape = src->shape;
    t->values = src->values;
    t->requires_grad = false;
    return t;
}

// Ordered record of operations; one backward pass walks it in reverse and
// accumulates dLoss/dLeaf into every requires_grad leaf. Construct with
// grad_enabled=false for pure inference: no records are kept and outputs
// do not require grad.
template <class T>
class Tape {
public:
    struct Record {
        TensorPtr<T> output;
        std::function<void()> backward;
    };

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }
    size_t size() const { return records_.size(); }
    void clear() { records_.clear(); }

    void record(TensorPtr<T> output, std::function<void()> backward) {
        records_.push_back(Record{std::move(output), std::move(backward)});
    }

    // Clears the gradients of every recorded output so the same graph can be
    // walked once per loss.
    void zero_output_grads() {
        for (auto& r : records_) r.output->zero_grad();
    }

    void backward(const TensorPtr<T>& loss) {
        if (!grad_enabled_) throw ContractError("backward: tape has gradients disabled");
        if (loss->numel() != 1) throw ContractError("backward: loss is not scalar, shape " + shape_str(loss->shape));
        bool on_tape = false;
        for (const auto& r : records_)
            if (r.output == loss) { on_tape = true; break; }
        if (!on_tape) throw ContractError("backward: loss was not produced on this tape");
        loss->grad[0] += T(1);
        for (auto it = records_.rbegin(); it != records_.rend(); ++it)
            if (it->backward) it->backward();
    }

private:
    bool grad_enabled_;
    std::vector<Record> records_;
};

namespace detail {

template <class T>
TensorPtr<T> alloc_output(Tape<T>& tape, Shape shape, bool any_input_grad) {
    const bool rg = tape.grad_enabled() && any_input_grad;
    return make_tensor<T>(std::move(shape), rg);
}

}  // namespace detail

// --- operations -----------------------------------------------------------

// Valid (no padding, stride 1) cross-correlation. Input [Cin,H,W] or
// [B,Cin,H,W]; kernels [Cout,Cin,K,K]; bias [Cout].
template <class T>
TensorPtr<T> conv2d_valid(Tape<T>& tape, const TensorPtr<T>& input,
                          const TensorPtr<T>& kernels, const TensorPtr<T>& bias) {
    Shape in_shape = input->shape;
    const bool batched = in_shape.size() == 4;
    if (!batched && in_shape.size() != 3)
        throw ShapeError("conv2d_valid: input rank must be 3 or 4, got " + shape_str(in_shape));
    if (kernels->shape.size() != 4 || kernels->shape[2] != kernels->shape[3])
        throw ShapeError("conv2d_valid: kernels must be [Cout,Cin,K,K], got " + shape_str(kernels->shape));
    const int B = batched ? in_shape[0] : 1;
    const int Cin = batched ? in_shape[1] : in_shape[0];
    const int H = batched ? in_shape[2] : in_shape[1];
    const int W = batched ? in_shape[3] : in_shape[2];
    const int Cout = kernels->shape[0];
    const int K = kernels->shape[2];
    if (kernels->shape[1] != Cin)
        throw ShapeError("conv2d_valid: kernel Cin " + std::to_string(kernels->shape[1]) +
                         " != input Cin " + std::to_string(Cin));
    if (K > H || K > W)
        throw ShapeError("conv2d_valid: kernel size " + std::to_string(K) + " exceeds input " +
                         std::to_string(H) + "x" + std::to_string(W));
    if (bias->shape != Shape{Cout})
        throw ShapeError("conv2d_valid: bias shape " + shape_str(bias->shape) + " != [" + std::to_string(Cout) + "]");

    const int Ho = H - K + 1, Wo = W - K + 1;
    Shape out_shape = batched ? Shape{B, Cout, Ho, Wo} : Shape{Cout, Ho, Wo};
    const bool rg = input->requires_grad || kernels->requires_grad || bias->requires_grad;
    auto out = detail::alloc_output(tape, out_shape, rg);
    kernels::conv2d_forward(input->values.data(), kernels->values.data(), bias->values.data(),
                            out->values.data(), B, Cin, H, W, Cout, K);
    if (out->requires_grad) {
        tape.record(out, [input, kernels, bias, out, B, Cin, H, W, Cout, K]() {
            const T* g = out->grad.data();
            if (input->requires_grad)
                kernels::conv2d_backward_input(g, kernels->values.data(), input->grad.data(),
                                               B, Cin, H, W, Cout, K);
            if (kernels->requires_grad)
                kernels::conv2d_backward_kernel(g, input->values.data(), kernels->grad.data(),
                                                B, Cin, H, W, Cout, K);
            if (bias->requires_grad)
                kernels::conv2d_backward_bias(g, bias->grad.data(), B, Cout, H - K + 1, W - K + 1);
        });
    }
    return out;
}

// Non-overlapping max pooling; trailing remainder rows/cols dropped.
template <class T>
TensorPtr<T> maxpool2d(Tape<T>& tape, const TensorPtr<T>& input, int k) {
    Shape in_shape = input->shape;
    const bool batched = in_shape.size() == 4;
    if (!batched && in_shape.size() != 3)
        throw ShapeError("maxpool2d: input rank must be 3 or 4, got " + shape_str(in_shape));
    const int B = batched ? in_shape[0] : 1;
    const int C = batched ? in_shape[1] : in_shape[0];
    const int H = batched ? in_shape[2] : in_shape[1];
    const int W = batched ? in_shape[3] : in_shape[2];
    if (k < 1 || k > H || k > W)
        throw ShapeError("maxpool2d: window " + std::to_string(k) + " invalid for input " +
                         std::to_string(H) + "x" + std::to_string(W));
    const int Ho = H / k, Wo = W / k;
    Shape out_shape = batched ? Shape{B, C, Ho, Wo} : Shape{C, Ho, Wo};
    auto out = detail::alloc_output(tape, out_shape, input->requires_grad);
    auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(B) * C * Ho * Wo);
    kernels::maxpool_forward(input->values.data(), out->values.data(), argmax->data(), B, C, H, W, k);
    if (out->requires_grad) {
        tape.record(out, [input, out, argmax, B, C, H, W, k]() {
            kernels::maxpool_backward(out->grad.data(), argmax->data(), input->grad.data(), B, C, H, W, k);
        });
    }
    return out;
}

// Affine map W x + b. Input [N] or [B,N]; weights [M,N]; bias [M].
template <class T>
TensorPtr<T> dense(Tape<T>& tape, const TensorPtr<T>& input,
                   const TensorPtr<T>& weights, const TensorPtr<T>& bias) {
    const bool batched = input->shape.size() == 2;
    if (!batched && input->shape.size() != 1)
        throw ShapeError("dense: input rank must be 1 or 2, got " + shape_str(input->shape));
    if (weights->shape.size() != 2)
        throw ShapeError("dense: weights must be [M,N], got " + shape_str(weights->shape));
    const int B = batched ? input->shape[0] : 1;
    const int N = batched ? input->shape[1] : input->shape[0];
    const int M = weights->shape[0];
    if (weights->shape[1] != N)
        throw ShapeError("dense: weights inner dim " + std::to_string(weights->shape[1]) +
                         " != input dim " + std::to_string(N));
    if (bias->shape != Shape{M})
        throw ShapeError("dense: bias shape " + shape_str(bias->shape) + " != [" + std::to_string(M) + "]");

    Shape out_shape = batched ? Shape{B, M} : Shape{M};
    const bool rg = input->requires_grad || weights->requires_grad || bias->requires_grad;
    auto out = detail::alloc_output(tape, out_shape, rg);
    kernels::dense_forward(input->values.data(), weights->values.data(), bias->values.data(),
                           out->values.data(), B, N, M);
    if (out->requires_grad) {
        tape.record(out, [input, weights, bias, out, B, N, M]() {
            const T* g = out->grad.data();
            if (input->requires_grad)
                kernels::dense_backward_input(g, weights->values.data(), input->grad.data(), B, N, M);
            if (weights->requires_grad)
                kernels::dense_backward_weight(g, input->values.data(), weights->grad.data(), B, N, M);
            if (bias->requires_grad)
                kernels::dense_backward_bias(g, bias->grad.data(), B, M);
        });
    }
    return out;
}

// max(0,x); subgradient 0 at exactly 0.
template <class T>
TensorPtr<T> relu(Tape<T>& tape, const TensorPtr<T>& input) {
    auto out = detail::alloc_output(tape, input->shape, input->requires_grad);
    kernels::relu_forward(input->values.data(), out->values.data(), input->numel());
    if (out->requires_grad) {
        tape.record(out, [input, out]() {
            kernels::relu_backward(out->grad.data(), input->values.data(), input->grad.data(), input->numel());
        });
    }
    return out;
}

namespace detail {

template <class T>
void check_same_shape(const char* op, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->shape != b->shape)
        throw ShapeError(std::string(op) + ": shapes differ, " + shape_str(a->shape) + " vs " + shape_str(b->shape));
}

}  // namespace detail

template <class T>
TensorPtr<T> add(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    detail::check_same_shape("add", a, b);
    auto out = detail::alloc_output(tape, a->shape, a->requires_grad || b->requires_grad);
    kernels::add(a->values.data(), b->values.data(), out->values.data(), a->numel());
    if (out->requires_grad) {
        tape.record(out, [a, b, out]() {
            if (a->requires_grad) kernels::axpy(T(1), out->grad.data(), a->grad.data(), a->numel());
            if (b->requires_grad) kernels::axpy(T(1), out->grad.data(), b->grad.data(), b->numel());
        });
    }
    return out;
}

template <class T>
TensorPtr<T> sub(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    detail::check_same_shape("sub", a, b);
    auto out = detail::alloc_output(tape, a->shape, a->requires_grad || b->requires_grad);
    kernels::sub(a->values.data(), b->values.data(), out->values.data(), a->numel());
    if (out->requires_grad) {
        tape.record(out, [a, b, out]() {
            if (a->requires_grad) kernels::axpy(T(1), out->grad.data(), a->grad.data(), a->numel());
            if (b->requires_grad) kernels::axpy(T(-1), out->grad.data(), b->grad.data(), b->numel());
        });
    }
    return out;
}

template <class T>
TensorPtr<T> mul(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    detail::check_same_shape("mul", a, b);
    auto out = detail::alloc_output(tape, a->shape, a->requires_grad || b->requires_grad);
    kernels::mul(a->values.data(), b->values.data(), out->values.data(), a->numel());
    if (out->requires_grad) {
        tape.record(out, [a, b, out]() {
            if (a->requires_grad) kernels::mul_acc(out->grad.data(), b->values.data(), a->grad.data(), a->numel());
            if (b->requires_grad) kernels::mul_acc(out->grad.data(), a->values.data(), b->grad.data(), b->numel());
        });
    }
    return out;
}

template <class T>
TensorPtr<T> scale(Tape<T>& tape, const TensorPtr<T>& a, T c) {
    auto out = detail::alloc_output(tape, a->shape, a->requires_grad);
    kernels::scale(a->values.data(), c, out->values.data(), a->numel());
    if (out->requires_grad) {
        tape.record(out, [a, out, c]() {
            kernels::axpy(c, out->grad.data(), a->grad.data(), a->numel());
        });
    }
    return out;
}

// Sum of all elements -> scalar [1].
template <class T>
TensorPtr<T> sum(Tape<T>& tape, const TensorPtr<T>& a) {
    auto out = detail::alloc_output(tape, Shape{1}, a->requires_grad);
    out->values[0] = kernels::sum(a->values.data(), a->numel());
    if (out->requires_grad) {
        tape.record(out, [a, out]() {
            const T g = out->grad[0];
            T* ga = a->grad.data();
            const long n = a->numel();
            for (long i = 0; i < n; ++i) ga[i] += g;
        });
    }
    return out;
}

// Row sums of [B,N] -> [B].
template <class T>
TensorPtr<T> sum_rows(Tape<T>& tape, const TensorPtr<T>& a) {
    if (a->shape.size() != 2)
        throw ShapeError("sum_rows: input must be [B,N], got " + shape_str(a->shape));
    const int B = a->shape[0], N = a->shape[1];
    auto out = detail::alloc_output(tape, Shape{B}, a->requires_grad);
    kernels::sum_rows(a->values.data(), out->values.data(), B, N);
    if (out->requires_grad) {
        tape.record(out, [a, out, B, N]() {
            for (int b = 0; b < B; ++b) {
                const T g = out->grad[b];
                T* row = a->grad.data() + static_cast<long>(b) * N;
                for (int n = 0; n < N; ++n) row[n] += g;
            }
        });
    }
    return out;
}

// Elementwise sqrt. Near-zero inputs get zero gradient: for distance terms
// the direction is undefined there and the composed gradient stays finite.
template <class T>
TensorPtr<T> sqrt_elem(Tape<T>& tape, const TensorPtr<T>& a) {
    auto out = detail::alloc_output(tape, a->shape, a->requires_grad);
    for (long i = 0; i < a->numel(); ++i) out->values[i] = std::sqrt(a->values[i]);
    if (out->requires_grad) {
        tape.record(out, [a, out]() {
            for (long i = 0; i < a->numel(); ++i) {
                const T v = out->values[i];
                if (v > T(1e-6)) a->grad[i] += out->grad[i] * T(0.5) / v;
            }
        });
    }
    return out;
}

template <class T>
TensorPtr<T> exp_elem(Tape<T>& tape, const TensorPtr<T>& a) {
    auto out = detail::alloc_output(tape, a->shape, a->requires_grad);
    for (long i = 0; i < a->numel(); ++i) out->values[i] = std::exp(a->values[i]);
    if (out->requires_grad) {
        tape.record(out, [a, out]() {
            kernels::mul_acc(out->grad.data(), out->values.data(), a->grad.data(), a->numel());
        });
    }
    return out;
}

// min(x, cap); gradient passes only where x < cap.
template <class T>
TensorPtr<T> min_const(Tape<T>& tape, const TensorPtr<T>& a, T cap) {
    auto out = detail::alloc_output(tape, a->shape, a->requires_grad);
    for (long i = 0; i < a->numel(); ++i) out->values[i] = std::min(a->values[i], cap);
    if (out->requires_grad) {
        tape.record(out, [a, out, cap]() {
            for (long i = 0; i < a->numel(); ++i)
                if (a->values[i] < cap) a->grad[i] += out->grad[i];
        });
    }
    return out;
}

// Column-wise concatenation: [B,N1] ++ [B,N2] -> [B,N1+N2] (rank-1 allowed).
template <class T>
TensorPtr<T> concat_cols(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    const bool batched = a->shape.size() == 2;
    if (b->shape.size() != a->shape.size())
        throw ShapeError("concat_cols: rank mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    const int B = batched ? a->shape[0] : 1;
    if (batched && b->shape[0] != B)
        throw ShapeError("concat_cols: batch dims differ, " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    const int N1 = batched ? a->shape[1] : a->shape[0];
    const int N2 = batched ? b->shape[1] : b->shape[0];
    Shape out_shape = batched ? Shape{B, N1 + N2} : Shape{N1 + N2};
    auto out = detail::alloc_output(tape, out_shape, a->requires_grad || b->requires_grad);
    for (int r = 0; r < B; ++r) {
        std::memcpy(out->values.data() + static_cast<long>(r) * (N1 + N2),
                    a->values.data() + static_cast<long>(r) * N1, sizeof(T) * N1);
        std::memcpy(out->values.data() + static_cast<long>(r) * (N1 + N2) + N1,
                    b->values.data() + static_cast<long>(r) * N2, sizeof(T) * N2);
    }
    if (out->requires_grad) {
        tape.record(out, [a, b, out, B, N1, N2]() {
            for (int r = 0; r < B; ++r) {
                const T* g = out->grad.data() + static_cast<long>(r) * (N1 + N2);
                if (a->requires_grad) {
                    T* ga = a->grad.data() + static_cast<long>(r) * N1;
                    for (int i = 0; i < N1; ++i) ga[i] += g[i];
                }
                if (b->requires_grad) {
                    T* gb = b->grad.data() + static_cast<long>(r) * N2;
                    for (int i = 0; i < N2; ++i) gb[i] += g[N1 + i];
                }
            }
        });
    }
    return out;
}

// Copy with a new shape (same element count).
template <class T>
TensorPtr<T> reshape(Tape<T>& tape, const TensorPtr<T>& a, Shape shape) {
    if (numel_of(shape) != a->numel())
        throw ShapeError("reshape: " + shape_str(a->shape) + " -> " + shape_str(shape) + " changes element count");
    auto out = detail::alloc_output(tape, std::move(shape), a->requires_grad);
    out->values = a->values;
    if (out->requires_grad) {
        tape.record(out, [a, out]() {
            kernels::axpy(T(1), out->grad.data(), a->grad.data(), a->numel());
        });
    }
    return out;
}

// Select rows of [U,N] by index -> [B,N]. Repeated indices accumulate
// gradient, which is what the batch-deduplicated encoder path relies on.
template <class T>
TensorPtr<T> gather_rows(Tape<T>& tape, const TensorPtr<T>& src, std::vector<int> idx) {
    if (src->shape.size() != 2)
        throw ShapeError("gather_rows: source must be [U,N], got " + shape_str(src->shape));
    const int U = src->shape[0], N = src->shape[1];
    const int B = static_cast<int>(idx.size());
    for (int i : idx)
        if (i < 0 || i >= U) throw ContractError("gather_rows: index " + std::to_string(i) + " out of [0," + std::to_string(U) + ")");
    auto out = detail::alloc_output(tape, Shape{B, N}, src->requires_grad);
    for (int b = 0; b < B; ++b)
        std::memcpy(out->values.data() + static_cast<long>(b) * N,
                    src->values.data() + static_cast<long>(idx[b]) * N, sizeof(T) * N);
    if (out->requires_grad) {
        auto indices = std::make_shared<std::vector<int>>(std::move(idx));
        tape.record(out, [src, out, indices, N]() {
            const int B2 = static_cast<int>(indices->size());
            for (int b = 0; b < B2; ++b) {
                T* g = src->grad.data() + static_cast<long>((*indices)[b]) * N;
                const T* go = out->grad.data() + static_cast<long>(b) * N;
                for (int n = 0; n < N; ++n) g[n] += go[n];
            }
        });
    }
    return out;
}

// --- optimizer -------------------------------------------------------------

// p <- p - lr * grad, then grads are zeroed.
template <class T>
void sgd_step(const std::vector<TensorPtr<T>>& params, T learning_rate) {
    for (const auto& p : params) {
        if (!p->requires_grad || p->grad.size() != p->values.size())
            throw ContractError("sgd_step: parameter missing gradient");
        kernels::axpy(-learning_rate, p->grad.data(), p->values.data(), p->numel());
        p->zero_grad();
    }
}

template <class T>
void zero_grads(const std::vector<TensorPtr<T>>& params) {
    for (const auto& p : params) p->zero_grad();
}

// Adam with bias correction. Keeps first/second moment slots per tensor;
// parameters absent from a step simply keep their slots.
template <class T>
class AdamOptimizer {
public:
    explicit AdamOptimizer(T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<TensorPtr<T>>& params) {
        std::vector<const T*> grads;
        grads.reserve(params.size());
        for (const auto& p : params) {
            if (!p->requires_grad || p->grad.size() != p->values.size())
                throw ContractError("AdamOptimizer: parameter missing gradient");
            grads.push_back(p->grad.data());
        }
        step_with(params, grads);
        for (const auto& p : params) p->zero_grad();
    }

    // Applies one update from externally held gradients (used when several
    // per-loss optimizers consume gradients snapshotted from one graph).
    void step_with(const std::vector<TensorPtr<T>>& params, const std::vector<const T*>& grads) {
        ++t_;
        const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
        const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
        for (size_t pi = 0; pi < params.size(); ++pi) {
            const auto& p = params[pi];
            auto& slot = slots_[p.get()];
            if (slot.m.empty()) {
                slot.m.assign(p->values.size(), T(0));
                slot.v.assign(p->values.size(), T(0));
            }
            const T* g = grads[pi];
            for (size_t i = 0; i < p->values.size(); ++i) {
                slot.m[i] = beta1_ * slot.m[i] + (T(1) - beta1_) * g[i];
                slot.v[i] = beta2_ * slot.v[i] + (T(1) - beta2_) * g[i] * g[i];
                const T mhat = slot.m[i] / bc1;
                const T vhat = slot.v[i] / bc2;
                p->values[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    T learning_rate() const { return lr_; }

private:
    struct Slot {
        std::vector<T> m, v;
    };
    T lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::map<TensorImpl<T>*, Slot> slots_;
};

}  // namespace pxrl
