#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace pxrl::kernels {

// Two implementations of every inner loop: a plain serial reference and an
// OpenMP variant. The parallel loops split only over independent output
// elements, and each element is a fixed-order serial reduction, so both
// backends produce bit-identical results at any thread count. Whole-array
// reductions stay serial in both backends for the same reason.

enum class Backend { kSerial, kParallel };

Backend backend();
void set_backend(Backend b);

// Elementwise loops below this size are not worth a parallel region.
inline constexpr long kParGrain = 4096;

// ---------------------------------------------------------------- serial --

namespace detail {

// Row-accumulation (axpy) layouts: every output row is built from shifted,
// scaled input rows, so the inner x loops are independent elements and
// vectorize without reassociating any reduction. Both backends call these,
// which keeps them bit-identical by construction.

template <class T>
void conv2d_forward_one(const T* inb, const T* k, const T* bias, T* outp,
                        int Cin, int H, int W, int co, int K) {
    const int Ho = H - K + 1, Wo = W - K + 1;
    for (int y = 0; y < Ho; ++y) {
        T* orow = outp + y * Wo;
        for (int x = 0; x < Wo; ++x) orow[x] = bias[co];
    }
    for (int ci = 0; ci < Cin; ++ci) {
        const T* inc = inb + static_cast<long>(ci) * H * W;
        const T* kc = k + ((static_cast<long>(co) * Cin + ci) * K) * K;
        for (int dy = 0; dy < K; ++dy)
            for (int dx = 0; dx < K; ++dx) {
                const T w = kc[dy * K + dx];
                for (int y = 0; y < Ho; ++y) {
                    const T* irow = inc + (y + dy) * W + dx;
                    T* orow = outp + y * Wo;
                    for (int x = 0; x < Wo; ++x) orow[x] += w * irow[x];
                }
            }
    }
}

template <class T>
void conv2d_backward_input_one(const T* goutb, const T* k, T* ginp,
                               int Cin, int H, int W, int Cout, int ci, int K) {
    const int Ho = H - K + 1, Wo = W - K + 1;
    for (int co = 0; co < Cout; ++co) {
        const T* goc = goutb + static_cast<long>(co) * Ho * Wo;
        const T* kc = k + ((static_cast<long>(co) * Cin + ci) * K) * K;
        for (int dy = 0; dy < K; ++dy)
            for (int dx = 0; dx < K; ++dx) {
                const T w = kc[dy * K + dx];
                for (int oy = 0; oy < Ho; ++oy) {
                    const T* grow = goc + oy * Wo;
                    T* irow = ginp + (oy + dy) * W + dx;
                    for (int ox = 0; ox < Wo; ++ox) irow[ox] += w * grow[ox];
                }
            }
    }
}

}  // namespace detail

namespace serial {

template <class T>
void conv2d_forward(const T* in, const T* k, const T* bias, T* out,
                    int B, int Cin, int H, int W, int Cout, int K) {
    const int Ho = H - K + 1, Wo = W - K + 1;
    for (long bc = 0; bc < static_cast<long>(B) * Cout; ++bc) {
        const int b = static_cast<int>(bc) / Cout;
        const int co = static_cast<int>(bc) % Cout;
        detail::conv2d_forward_one(in + static_cast<long>(b) * Cin * H * W, k, bias,
                                   out + (static_cast<long>(b) * Cout + co) * Ho * Wo,
                                   Cin, H, W, co, K);
    }
}

// Each (sample, input-channel) plane accumulates its own contributions.
template <class T>
void conv2d_backward_input(const T* gout, const T* k, T* gin,
                           int B, int Cin, int H, int W, int Cout, int K) {
    const int Ho = H - K + 1, Wo = W - K + 1;
    for (long bc = 0; bc < static_cast<long>(B) * Cin; ++bc) {
        const int b = static_cast<int>(bc) / Cin;
        const int ci = static_cast<int>(bc) % Cin;
        detail::conv2d_backward_input_one(gout + static_cast<long>(b) * Cout * Ho * Wo, k,
                                          gin + (static_cast<long>(b) * Cin + ci) * H * W,
                                          Cin, H, W, Cout, ci, K);
    }
}

template <class T>
void conv2d_backward_kernel(const T* gout, const T* in, T* gk,
                            int B, int Cin, int H, int W, int Cout, int K) {
    const int Ho = H - K + 1, Wo = W - K + 1;
    const long n = static_cast<long>(Cout) * Cin * K * K;
    for (long i = 0; i < n; ++i) {
        const int dx = static_cast<int>(i) % K;
        const int dy = static_cast<int>(i / K) % K;
        const int ci = static_cast<int>(i / (K * K)) % Cin;
        const int co = static_cast<int>(i / (static_cast<long>(K) * K * Cin));
        T acc = 0;
        for (int b = 0; b < B; ++b) {
            const T* goc = gout + (static_cast<long>(b) * Cout + co) * Ho * Wo;
            const T* inc = in + (static_cast<long>(b) * Cin + ci) * H * W;
            for (int y = 0; y < Ho; ++y)
                for (int x = 0; x < Wo; ++x)
                    acc += goc[y * Wo + x] * inc[(y + dy) * W + (x + dx)];
        }
        gk[i] += acc;
    }
}

template <class T>
void conv2d_backward_bias(const T* gout, T* gb, int B, int Cout, int Ho, int Wo) {
    for (int co = 0; co < Cout; ++co) {
        T acc = 0;
        for (int b = 0; b < B; ++b) {
            const T* goc = gout + (static_cast<long>(b) * Cout + co) * Ho * Wo;
            for (int i = 0; i < Ho * Wo; ++i) acc += goc[i];
        }
        gb[co] += acc;
    }
}

template <class T>
void dense_forward(const T* in, const T* w, const T* bias, T* out, int B, int N, int M) {
    for (long bm = 0; bm < static_cast<long>(B) * M; ++bm) {
        const int b = static_cast<int>(bm) / M;
        const int m = static_cast<int>(bm) % M;
        const T* inb = in + static_cast<long>(b) * N;
        const T* wm = w + static_cast<long>(m) * N;
        T acc = bias[m];
        for (int n = 0; n < N; ++n) acc += wm[n] * inb[n];
        out[bm] = acc;
    }
}

template <class T>
void dense_backward_input(const T* gout, const T* w, T* gin, int B, int N, int M) {
    for (long bn = 0; bn < static_cast<long>(B) * N; ++bn) {
        const int b = static_cast<int>(bn) / N;
        const int n = static_cast<int>(bn) % N;
        const T* gob = gout + static_cast<long>(b) * M;
        T acc = 0;
        for (int m = 0; m < M; ++m) acc += gob[m] * w[static_cast<long>(m) * N + n];
        gin[bn] += acc;
    }
}

template <class T>
void dense_backward_weight(const T* gout, const T* in, T* gw, int B, int N, int M) {
    for (long mn = 0; mn < static_cast<long>(M) * N; ++mn) {
        const int m = static_cast<int>(mn) / N;
        const int n = static_cast<int>(mn) % N;
        T acc = 0;
        for (int b = 0; b < B; ++b) acc += gout[static_cast<long>(b) * M + m] * in[static_cast<long>(b) * N + n];
        gw[mn] += acc;
    }
}

template <class T>
void dense_backward_bias(const T* gout, T* gb, int B, int M) {
    for (int m = 0; m < M; ++m) {
        T acc = 0;
        for (int b = 0; b < B; ++b) acc += gout[static_cast<long>(b) * M + m];
        gb[m] += acc;
    }
}

// Non-overlapping windows; ties go to the first element in row-major order.
template <class T>
void maxpool_forward(const T* in, T* out, int* argmax, int B, int C, int H, int W, int K) {
    const int Ho = H / K, Wo = W / K;
    for (long bc = 0; bc < static_cast<long>(B) * C; ++bc) {
        const T* inc = in + bc * H * W;
        T* outc = out + bc * Ho * Wo;
        int* argc = argmax + bc * Ho * Wo;
        for (int y = 0; y < Ho; ++y)
            for (int x = 0; x < Wo; ++x) {
                int best = (y * K) * W + (x * K);
                T bv = inc[best];
                for (int dy = 0; dy < K; ++dy)
                    for (int dx = 0; dx < K; ++dx) {
                        const int idx = (y * K + dy) * W + (x * K + dx);
                        if (inc[idx] > bv) { bv = inc[idx]; best = idx; }
                    }
                outc[y * Wo + x] = bv;
                argc[y * Wo + x] = best;
            }
    }
}

template <class T>
void maxpool_backward(const T* gout, const int* argmax, T* gin, int B, int C, int H, int W, int K) {
    const int Ho = H / K, Wo = W / K;
    for (long bc = 0; bc < static_cast<long>(B) * C; ++bc) {
        const T* goc = gout + bc * Ho * Wo;
        const int* argc = argmax + bc * Ho * Wo;
        T* ginc = gin + bc * H * W;
        for (int i = 0; i < Ho * Wo; ++i) ginc[argc[i]] += goc[i];
    }
}

template <class T>
void relu_forward(const T* in, T* out, long n) {
    for (long i = 0; i < n; ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

template <class T>
void relu_backward(const T* gout, const T* in, T* gin, long n) {
    for (long i = 0; i < n; ++i)
        if (in[i] > T(0)) gin[i] += gout[i];
}

template <class T>
void axpy(T a, const T* x, T* y, long n) {  // y += a*x
    for (long i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
void add(const T* a, const T* b, T* out, long n) {
    for (long i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <class T>
void sub(const T* a, const T* b, T* out, long n) {
    for (long i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <class T>
void mul(const T* a, const T* b, T* out, long n) {
    for (long i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <class T>
void mul_acc(const T* a, const T* b, T* out, long n) {  // out += a .* b
    for (long i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

template <class T>
void scale(const T* a, T c, T* out, long n) {
    for (long i = 0; i < n; ++i) out[i] = c * a[i];
}

template <class T>
T sum(const T* a, long n) {  // serial by contract (determinism)
    T acc = 0;
    for (long i = 0; i < n; ++i) acc += a[i];
    return acc;
}

template <class T>
void sum_rows(const T* a, T* out, int B, int N) {
    for (int b = 0; b < B; ++b) {
        T acc = 0;
        const T* row = a + static_cast<long>(b) * N;
        for (int n = 0; n < N; ++n) acc += row[n];
        out[b] = acc;
    }
}

}  // namespace serial

// ------------------------------------------------------------------- omp --

namespace omp {

template <class T>
void conv2d_forward(const T* in, const T* k, const T* bias, T* out,
                    int B, int Cin, int H, int W, int Cout, int K) {
    const int Ho = H - K + 1, Wo = W - K + 1;
    const long nbc = static_cast<long>(B) * Cout;
#pragma omp parallel for schedule(static)
    for (long bc = 0; bc < nbc; ++bc) {
        const int b = static_cast<int>(bc) / Cout;
        const int co = static_cast<int>(bc) % Cout;
        detail::conv2d_forward_one(in + static_cast<long>(b) * Cin * H * W, k, bias,
                                   out + (static_cast<long>(b) * Cout + co) * Ho * Wo,
                                   Cin, H, W, co, K);
    }
}

template <class T>
void conv2d_backward_input(const T* gout, const T* k, T* gin,
                           int B, int Cin, int H, int W, int Cout, int K) {
    const int Ho = H - K + 1, Wo = W - K + 1;
    const long nbc = static_cast<long>(B) * Cin;
#pragma omp parallel for schedule(static)
    for (long bc = 0; bc < nbc; ++bc) {
        const int b = static_cast<int>(bc) / Cin;
        const int ci = static_cast<int>(bc) % Cin;
        detail::conv2d_backward_input_one(gout + static_cast<long>(b) * Cout * Ho * Wo, k,
                                          gin + (static_cast<long>(b) * Cin + ci) * H * W,
                                          Cin, H, W, Cout, ci, K);
    }
}

template <class T>
void conv2d_backward_kernel(const T* gout, const T* in, T* gk,
                            int B, int Cin, int H, int W, int Cout, int K) {
    const int Ho = H - K + 1, Wo = W - K + 1;
    const long n = static_cast<long>(Cout) * Cin * K * K;
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        const int dx = static_cast<int>(i) % K;
        const int dy = static_cast<int>(i / K) % K;
        const int ci = static_cast<int>(i / (K * K)) % Cin;
        const int co = static_cast<int>(i / (static_cast<long>(K) * K * Cin));
        T acc = 0;
        for (int b = 0; b < B; ++b) {
            const T* goc = gout + (static_cast<long>(b) * Cout + co) * Ho * Wo;
            const T* inc = in + (static_cast<long>(b) * Cin + ci) * H * W;
            for (int y = 0; y < Ho; ++y)
                for (int x = 0; x < Wo; ++x)
                    acc += goc[y * Wo + x] * inc[(y + dy) * W + (x + dx)];
        }
        gk[i] += acc;
    }
}

template <class T>
void conv2d_backward_bias(const T* gout, T* gb, int B, int Cout, int Ho, int Wo) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < Cout; ++co) {
        T acc = 0;
        for (int b = 0; b < B; ++b) {
            const T* goc = gout + (static_cast<long>(b) * Cout + co) * Ho * Wo;
            for (int i = 0; i < Ho * Wo; ++i) acc += goc[i];
        }
        gb[co] += acc;
    }
}

template <class T>
void dense_forward(const T* in, const T* w, const T* bias, T* out, int B, int N, int M) {
    const long nbm = static_cast<long>(B) * M;
#pragma omp parallel for schedule(static) if (nbm * N > kParGrain)
    for (long bm = 0; bm < nbm; ++bm) {
        const int b = static_cast<int>(bm) / M;
        const int m = static_cast<int>(bm) % M;
        const T* inb = in + static_cast<long>(b) * N;
        const T* wm = w + static_cast<long>(m) * N;
        T acc = bias[m];
        for (int n = 0; n < N; ++n) acc += wm[n] * inb[n];
        out[bm] = acc;
    }
}

template <class T>
void dense_backward_input(const T* gout, const T* w, T* gin, int B, int N, int M) {
    const long nbn = static_cast<long>(B) * N;
#pragma omp parallel for schedule(static) if (nbn * M > kParGrain)
    for (long bn = 0; bn < nbn; ++bn) {
        const int b = static_cast<int>(bn) / N;
        const int n = static_cast<int>(bn) % N;
        const T* gob = gout + static_cast<long>(b) * M;
        T acc = 0;
        for (int m = 0; m < M; ++m) acc += gob[m] * w[static_cast<long>(m) * N + n];
        gin[bn] += acc;
    }
}

template <class T>
void dense_backward_weight(const T* gout, const T* in, T* gw, int B, int N, int M) {
    const long nmn = static_cast<long>(M) * N;
#pragma omp parallel for schedule(static) if (nmn * B > kParGrain)
    for (long mn = 0; mn < nmn; ++mn) {
        const int m = static_cast<int>(mn) / N;
        const int n = static_cast<int>(mn) % N;
        T acc = 0;
        for (int b = 0; b < B; ++b) acc += gout[static_cast<long>(b) * M + m] * in[static_cast<long>(b) * N + n];
        gw[mn] += acc;
    }
}

template <class T>
void dense_backward_bias(const T* gout, T* gb, int B, int M) {
#pragma omp parallel for schedule(static) if (static_cast<long>(B) * M > kParGrain)
    for (int m = 0; m < M; ++m) {
        T acc = 0;
        for (int b = 0; b < B; ++b) acc += gout[static_cast<long>(b) * M + m];
        gb[m] += acc;
    }
}

template <class T>
void maxpool_forward(const T* in, T* out, int* argmax, int B, int C, int H, int W, int K) {
    const int Ho = H / K, Wo = W / K;
    const long nbc = static_cast<long>(B) * C;
#pragma omp parallel for schedule(static)
    for (long bc = 0; bc < nbc; ++bc) {
        const T* inc = in + bc * H * W;
        T* outc = out + bc * Ho * Wo;
        int* argc = argmax + bc * Ho * Wo;
        for (int y = 0; y < Ho; ++y)
            for (int x = 0; x < Wo; ++x) {
                int best = (y * K) * W + (x * K);
                T bv = inc[best];
                for (int dy = 0; dy < K; ++dy)
                    for (int dx = 0; dx < K; ++dx) {
                        const int idx = (y * K + dy) * W + (x * K + dx);
                        if (inc[idx] > bv) { bv = inc[idx]; best = idx; }
                    }
                outc[y * Wo + x] = bv;
                argc[y * Wo + x] = best;
            }
    }
}

template <class T>
void maxpool_backward(const T* gout, const int* argmax, T* gin, int B, int C, int H, int W, int K) {
    const int Ho = H / K, Wo = W / K;
    const long nbc = static_cast<long>(B) * C;
    // windows are disjoint, so each gin element is written by one iteration
#pragma omp parallel for schedule(static)
    for (long bc = 0; bc < nbc; ++bc) {
        const T* goc = gout + bc * Ho * Wo;
        const int* argc = argmax + bc * Ho * Wo;
        T* ginc = gin + bc * H * W;
        for (int i = 0; i < Ho * Wo; ++i) ginc[argc[i]] += goc[i];
    }
}

template <class T>
void relu_forward(const T* in, T* out, long n) {
#pragma omp parallel for schedule(static) if (n > kParGrain)
    for (long i = 0; i < n; ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

template <class T>
void relu_backward(const T* gout, const T* in, T* gin, long n) {
#pragma omp parallel for schedule(static) if (n > kParGrain)
    for (long i = 0; i < n; ++i)
        if (in[i] > T(0)) gin[i] += gout[i];
}

template <class T>
void axpy(T a, const T* x, T* y, long n) {
#pragma omp parallel for schedule(static) if (n > kParGrain)
    for (long i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
void add(const T* a, const T* b, T* out, long n) {
#pragma omp parallel for schedule(static) if (n > kParGrain)
    for (long i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <class T>
void sub(const T* a, const T* b, T* out, long n) {
#pragma omp parallel for schedule(static) if (n > kParGrain)
    for (long i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <class T>
void mul(const T* a, const T* b, T* out, long n) {
#pragma omp parallel for schedule(static) if (n > kParGrain)
    for (long i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <class T>
void mul_acc(const T* a, const T* b, T* out, long n) {
#pragma omp parallel for schedule(static) if (n > kParGrain)
    for (long i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

template <class T>
void scale(const T* a, T c, T* out, long n) {
#pragma omp parallel for schedule(static) if (n > kParGrain)
    for (long i = 0; i < n; ++i) out[i] = c * a[i];
}

template <class T>
T sum(const T* a, long n) {
    return serial::sum(a, n);  // fixed order
}

template <class T>
void sum_rows(const T* a, T* out, int B, int N) {
#pragma omp parallel for schedule(static) if (static_cast<long>(B) * N > kParGrain)
    for (int b = 0; b < B; ++b) {
        T acc = 0;
        const T* row = a + static_cast<long>(b) * N;
        for (int n = 0; n < N; ++n) acc += row[n];
        out[b] = acc;
    }
}

}  // namespace omp

// -------------------------------------------------------------- dispatch --

#define PXRL_DISPATCH(fn, ...)                          \
    do {                                                \
        if (backend() == Backend::kParallel)            \
            omp::fn(__VA_ARGS__);                       \
        else                                            \
            serial::fn(__VA_ARGS__);                    \
    } while (0)

template <class T>
void conv2d_forward(const T* in, const T* k, const T* bias, T* out,
                    int B, int Cin, int H, int W, int Cout, int K) {
    PXRL_DISPATCH(conv2d_forward, in, k, bias, out, B, Cin, H, W, Cout, K);
}
template <class T>
void conv2d_backward_input(const T* gout, const T* k, T* gin,
                           int B, int Cin, int H, int W, int Cout, int K) {
    PXRL_DISPATCH(conv2d_backward_input, gout, k, gin, B, Cin, H, W, Cout, K);
}
template <class T>
void conv2d_backward_kernel(const T* gout, const T* in, T* gk,
                            int B, int Cin, int H, int W, int Cout, int K) {
    PXRL_DISPATCH(conv2d_backward_kernel, gout, in, gk, B, Cin, H, W, Cout, K);
}
template <class T>
void conv2d_backward_bias(const T* gout, T* gb, int B, int Cout, int Ho, int Wo) {
    PXRL_DISPATCH(conv2d_backward_bias, gout, gb, B, Cout, Ho, Wo);
}
template <class T>
void dense_forward(const T* in, const T* w, const T* bias, T* out, int B, int N, int M) {
    PXRL_DISPATCH(dense_forward, in, w, bias, out, B, N, M);
}
template <class T>
void dense_backward_input(const T* gout, const T* w, T* gin, int B, int N, int M) {
    PXRL_DISPATCH(dense_backward_input, gout, w, gin, B, N, M);
}
template <class T>
void dense_backward_weight(const T* gout, const T* in, T* gw, int B, int N, int M) {
    PXRL_DISPATCH(dense_backward_weight, gout, in, gw, B, N, M);
}
template <class T>
void dense_backward_bias(const T* gout, T* gb, int B, int M) {
    PXRL_DISPATCH(dense_backward_bias, gout, gb, B, M);
}
template <class T>
void maxpool_forward(const T* in, T* out, int* argmax, int B, int C, int H, int W, int K) {
    PXRL_DISPATCH(maxpool_forward, in, out, argmax, B, C, H, W, K);
}
template <class T>
void maxpool_backward(const T* gout, const int* argmax, T* gin, int B, int C, int H, int W, int K) {
    PXRL_DISPATCH(maxpool_backward, gout, argmax, gin, B, C, H, W, K);
}
template <class T>
void relu_forward(const T* in, T* out, long n) { PXRL_DISPATCH(relu_forward, in, out, n); }
template <class T>
void relu_backward(const T* gout, const T* in, T* gin, long n) { PXRL_DISPATCH(relu_backward, gout, in, gin, n); }
template <class T>
void axpy(T a, const T* x, T* y, long n) { PXRL_DISPATCH(axpy, a, x, y, n); }
template <class T>
void add(const T* a, const T* b, T* out, long n) { PXRL_DISPATCH(add, a, b, out, n); }
template <class T>
void sub(const T* a, const T* b, T* out, long n) { PXRL_DISPATCH(sub, a, b, out, n); }
template <class T>
void mul(const T* a, const T* b, T* out, long n) { PXRL_DISPATCH(mul, a, b, out, n); }
template <class T>
void mul_acc(const T* a, const T* b, T* out, long n) { PXRL_DISPATCH(mul_acc, a, b, out, n); }
template <class T>
void scale(const T* a, T c, T* out, long n) { PXRL_DISPATCH(scale, a, c, out, n); }
template <class T>
T sum(const T* a, long n) { return serial::sum(a, n); }
template <class T>
void sum_rows(const T* a, T* out, int B, int N) { PXRL_DISPATCH(sum_rows, a, out, B, N); }

#undef PXRL_DISPATCH

}  // namespace pxrl::kernels
