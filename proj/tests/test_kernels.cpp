#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "pxrl/kernels.hpp"
#include "pxrl/rng.hpp"

using namespace pxrl;

namespace {

std::vector<float> random_vec(size_t n, Rng& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = rng.uniform(-1.0f, 1.0f);
    return v;
}

}  // namespace

// The parallel kernels must be bit-identical to the serial reference: every
// output element is computed as the same fixed-order reduction.
TEST_CASE("conv2d forward and backwards match serial bit-exactly") {
    Rng rng(7);
    const int B = 3, Cin = 4, H = 9, W = 8, Cout = 5, K = 2;
    const int Ho = H - K + 1, Wo = W - K + 1;
    auto in = random_vec(static_cast<size_t>(B) * Cin * H * W, rng);
    auto k = random_vec(static_cast<size_t>(Cout) * Cin * K * K, rng);
    auto bias = random_vec(Cout, rng);
    auto gout = random_vec(static_cast<size_t>(B) * Cout * Ho * Wo, rng);

    std::vector<float> out_s(gout.size()), out_p(gout.size());
    kernels::serial::conv2d_forward(in.data(), k.data(), bias.data(), out_s.data(), B, Cin, H, W, Cout, K);
    kernels::omp::conv2d_forward(in.data(), k.data(), bias.data(), out_p.data(), B, Cin, H, W, Cout, K);
    CHECK(std::memcmp(out_s.data(), out_p.data(), out_s.size() * sizeof(float)) == 0);

    std::vector<float> gin_s(in.size(), 0.5f), gin_p(in.size(), 0.5f);
    kernels::serial::conv2d_backward_input(gout.data(), k.data(), gin_s.data(), B, Cin, H, W, Cout, K);
    kernels::omp::conv2d_backward_input(gout.data(), k.data(), gin_p.data(), B, Cin, H, W, Cout, K);
    CHECK(std::memcmp(gin_s.data(), gin_p.data(), gin_s.size() * sizeof(float)) == 0);

    std::vector<float> gk_s(k.size(), 0.25f), gk_p(k.size(), 0.25f);
    kernels::serial::conv2d_backward_kernel(gout.data(), in.data(), gk_s.data(), B, Cin, H, W, Cout, K);
    kernels::omp::conv2d_backward_kernel(gout.data(), in.data(), gk_p.data(), B, Cin, H, W, Cout, K);
    CHECK(std::memcmp(gk_s.data(), gk_p.data(), gk_s.size() * sizeof(float)) == 0);

    std::vector<float> gb_s(Cout, 0.0f), gb_p(Cout, 0.0f);
    kernels::serial::conv2d_backward_bias(gout.data(), gb_s.data(), B, Cout, Ho, Wo);
    kernels::omp::conv2d_backward_bias(gout.data(), gb_p.data(), B, Cout, Ho, Wo);
    CHECK(std::memcmp(gb_s.data(), gb_p.data(), gb_s.size() * sizeof(float)) == 0);
}

TEST_CASE("dense kernels match serial bit-exactly") {
    Rng rng(11);
    const int B = 64, N = 300, M = 40;
    auto in = random_vec(static_cast<size_t>(B) * N, rng);
    auto w = random_vec(static_cast<size_t>(M) * N, rng);
    auto bias = random_vec(M, rng);
    auto gout = random_vec(static_cast<size_t>(B) * M, rng);

    std::vector<float> out_s(static_cast<size_t>(B) * M), out_p(out_s.size());
    kernels::serial::dense_forward(in.data(), w.data(), bias.data(), out_s.data(), B, N, M);
    kernels::omp::dense_forward(in.data(), w.data(), bias.data(), out_p.data(), B, N, M);
    CHECK(std::memcmp(out_s.data(), out_p.data(), out_s.size() * sizeof(float)) == 0);

    std::vector<float> gin_s(in.size(), 1.0f), gin_p(in.size(), 1.0f);
    kernels::serial::dense_backward_input(gout.data(), w.data(), gin_s.data(), B, N, M);
    kernels::omp::dense_backward_input(gout.data(), w.data(), gin_p.data(), B, N, M);
    CHECK(std::memcmp(gin_s.data(), gin_p.data(), gin_s.size() * sizeof(float)) == 0);

    std::vector<float> gw_s(w.size(), -0.5f), gw_p(w.size(), -0.5f);
    kernels::serial::dense_backward_weight(gout.data(), in.data(), gw_s.data(), B, N, M);
    kernels::omp::dense_backward_weight(gout.data(), in.data(), gw_p.data(), B, N, M);
    CHECK(std::memcmp(gw_s.data(), gw_p.data(), gw_s.size() * sizeof(float)) == 0);

    std::vector<float> gb_s(M, 0.0f), gb_p(M, 0.0f);
    kernels::serial::dense_backward_bias(gout.data(), gb_s.data(), B, M);
    kernels::omp::dense_backward_bias(gout.data(), gb_p.data(), B, M);
    CHECK(std::memcmp(gb_s.data(), gb_p.data(), gb_s.size() * sizeof(float)) == 0);
}

TEST_CASE("maxpool ties route to the first row-major element") {
    // constant input: every window's gradient lands on its top-left element
    const int B = 1, C = 1, H = 4, W = 4, K = 2;
    std::vector<float> in(16, 3.0f), out(4), gout(4, 1.0f), gin(16, 0.0f);
    std::vector<int> argmax(4);
    kernels::maxpool_forward(in.data(), out.data(), argmax.data(), B, C, H, W, K);
    for (float v : out) CHECK(v == 3.0f);
    CHECK(argmax[0] == 0);
    CHECK(argmax[1] == 2);
    CHECK(argmax[2] == 8);
    CHECK(argmax[3] == 10);
    kernels::maxpool_backward(gout.data(), argmax.data(), gin.data(), B, C, H, W, K);
    int nonzero = 0;
    for (float v : gin) nonzero += v != 0.0f;
    CHECK(nonzero == 4);
    CHECK(gin[0] == 1.0f);
}

TEST_CASE("maxpool parallel matches serial on random input") {
    Rng rng(3);
    const int B = 2, C = 3, H = 7, W = 9, K = 2;  // remainder rows/cols dropped
    auto in = random_vec(static_cast<size_t>(B) * C * H * W, rng);
    const int Ho = H / K, Wo = W / K;
    std::vector<float> out_s(static_cast<size_t>(B) * C * Ho * Wo), out_p(out_s.size());
    std::vector<int> arg_s(out_s.size()), arg_p(out_s.size());
    kernels::serial::maxpool_forward(in.data(), out_s.data(), arg_s.data(), B, C, H, W, K);
    kernels::omp::maxpool_forward(in.data(), out_p.data(), arg_p.data(), B, C, H, W, K);
    CHECK(std::memcmp(out_s.data(), out_p.data(), out_s.size() * sizeof(float)) == 0);
    CHECK(arg_s == arg_p);
}

TEST_CASE("backend switch is honored") {
    const auto saved = kernels::backend();
    kernels::set_backend(kernels::Backend::kSerial);
    CHECK(kernels::backend() == kernels::Backend::kSerial);
    kernels::set_backend(saved);
}
