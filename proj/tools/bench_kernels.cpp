// Times every kernel in both backends and reports the parallel speedup.
// The checked workloads mirror the training hot path (conv/dense forward and
// backward) at batch size 64 plus a larger synthetic size.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "pxrl/kernels.hpp"
#include "pxrl/rng.hpp"

using namespace pxrl;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<float> rand_vec(size_t n, Rng& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = rng.uniform(-1.0f, 1.0f);
    return v;
}

template <class F>
double time_ms(F&& fn, int reps) {
    fn();  // warm up
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-28s serial %8.3f ms   parallel %8.3f ms   speedup %.2fx\n", name, serial_ms,
                parallel_ms, serial_ms / parallel_ms);
}

void bench_conv(int B, int Cin, int H, int W, int Cout, int K, int reps, const char* label) {
    Rng rng(42);
    const int Ho = H - K + 1, Wo = W - K + 1;
    auto in = rand_vec(static_cast<size_t>(B) * Cin * H * W, rng);
    auto k = rand_vec(static_cast<size_t>(Cout) * Cin * K * K, rng);
    auto bias = rand_vec(Cout, rng);
    auto gout = rand_vec(static_cast<size_t>(B) * Cout * Ho * Wo, rng);
    std::vector<float> out(gout.size()), gin(in.size()), gk(k.size());

    char name[96];
    std::snprintf(name, sizeof(name), "conv2d fwd %s", label);
    report(name,
           time_ms([&] { kernels::serial::conv2d_forward(in.data(), k.data(), bias.data(), out.data(), B, Cin, H, W, Cout, K); }, reps),
           time_ms([&] { kernels::omp::conv2d_forward(in.data(), k.data(), bias.data(), out.data(), B, Cin, H, W, Cout, K); }, reps));
    std::snprintf(name, sizeof(name), "conv2d bwd-input %s", label);
    report(name,
           time_ms([&] { kernels::serial::conv2d_backward_input(gout.data(), k.data(), gin.data(), B, Cin, H, W, Cout, K); }, reps),
           time_ms([&] { kernels::omp::conv2d_backward_input(gout.data(), k.data(), gin.data(), B, Cin, H, W, Cout, K); }, reps));
    std::snprintf(name, sizeof(name), "conv2d bwd-kernel %s", label);
    report(name,
           time_ms([&] { kernels::serial::conv2d_backward_kernel(gout.data(), in.data(), gk.data(), B, Cin, H, W, Cout, K); }, reps),
           time_ms([&] { kernels::omp::conv2d_backward_kernel(gout.data(), in.data(), gk.data(), B, Cin, H, W, Cout, K); }, reps));
}

void bench_dense(int B, int N, int M, int reps, const char* label) {
    Rng rng(43);
    auto in = rand_vec(static_cast<size_t>(B) * N, rng);
    auto w = rand_vec(static_cast<size_t>(M) * N, rng);
    auto bias = rand_vec(M, rng);
    auto gout = rand_vec(static_cast<size_t>(B) * M, rng);
    std::vector<float> out(gout.size()), gin(in.size()), gw(w.size());

    char name[96];
    std::snprintf(name, sizeof(name), "dense fwd %s", label);
    report(name,
           time_ms([&] { kernels::serial::dense_forward(in.data(), w.data(), bias.data(), out.data(), B, N, M); }, reps),
           time_ms([&] { kernels::omp::dense_forward(in.data(), w.data(), bias.data(), out.data(), B, N, M); }, reps));
    std::snprintf(name, sizeof(name), "dense bwd-weight %s", label);
    report(name,
           time_ms([&] { kernels::serial::dense_backward_weight(gout.data(), in.data(), gw.data(), B, N, M); }, reps),
           time_ms([&] { kernels::omp::dense_backward_weight(gout.data(), in.data(), gw.data(), B, N, M); }, reps));
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads = %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP disabled; parallel backend falls back to the same loops\n");
#endif
    std::printf("\n-- training-shaped workloads (batch 64) --\n");
    bench_conv(64, 1, 8, 8, 16, 2, 200, "64x1x8x8 -> 16");
    bench_conv(64, 16, 7, 7, 32, 2, 50, "64x16x7x7 -> 32");
    bench_dense(64, 288, 32, 200, "64x288 -> 32");

    std::printf("\n-- larger synthetic workloads --\n");
    bench_conv(16, 16, 64, 64, 32, 2, 5, "16x16x64x64 -> 32");
    bench_dense(256, 2048, 512, 5, "256x2048 -> 512");
    return 0;
}
