#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "pxrl/gradcheck.hpp"
#include "pxrl/rng.hpp"
#include "pxrl/tensor.hpp"

using namespace pxrl;

namespace {

template <class T>
TensorPtr<T> randn(Shape shape, Rng& rng, bool rg = true) {
    auto t = make_tensor<T>(shape, rg);
    for (auto& v : t->values) v = static_cast<T>(rng.uniform(-1.0f, 1.0f));
    return t;
}

}  // namespace

TEST_CASE("conv2d identity kernel passes input through") {
    Tape<float> tape;
    Rng rng(1);
    auto in = randn<float>({1, 4, 4}, rng);
    auto k = make_tensor<float>({1, 1, 1, 1}, {1.0f});
    auto b = make_tensor<float>({1}, {0.0f});
    auto out = conv2d_valid(tape, in, k, b);
    REQUIRE(out->shape == Shape{1, 4, 4});
    for (long i = 0; i < in->numel(); ++i) CHECK(out->values[i] == in->values[i]);
}

TEST_CASE("conv2d on zero input broadcasts the bias") {
    Tape<float> tape;
    auto in = make_tensor<float>({2, 5, 5});
    Rng rng(2);
    auto k = randn<float>({3, 2, 2, 2}, rng);
    auto b = make_tensor<float>({3}, {0.5f, -1.5f, 2.0f});
    auto out = conv2d_valid(tape, in, k, b);
    REQUIRE(out->shape == Shape{3, 4, 4});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 16; ++i) CHECK(out->values[c * 16 + i] == b->values[c]);
}

TEST_CASE("conv2d hand-summed 2x2 windows") {
    Tape<float> tape;
    auto in = make_tensor<float>({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    auto k = make_tensor<float>({1, 1, 2, 2}, {1, 1, 1, 1});
    auto b = make_tensor<float>({1}, {0.0f});
    auto out = conv2d_valid(tape, in, k, b);
    REQUIRE(out->shape == Shape{1, 2, 2});
    CHECK(out->values[0] == 12.0f);
    CHECK(out->values[1] == 16.0f);
    CHECK(out->values[2] == 24.0f);
    CHECK(out->values[3] == 28.0f);
}

TEST_CASE("conv2d shape errors name the offending dims") {
    Tape<float> tape;
    auto in = make_tensor<float>({1, 2, 2});
    auto k = make_tensor<float>({1, 1, 3, 3});
    auto b = make_tensor<float>({1});
    CHECK_THROWS_AS(conv2d_valid(tape, in, k, b), ShapeError);
    auto k2 = make_tensor<float>({1, 4, 2, 2});
    CHECK_THROWS_WITH_AS(conv2d_valid(tape, in, k2, b),
                         doctest::Contains("Cin"), ShapeError);
}

TEST_CASE("maxpool k=1 is the identity") {
    Tape<float> tape;
    Rng rng(3);
    auto in = randn<float>({2, 3, 3}, rng);
    auto out = maxpool2d(tape, in, 1);
    CHECK(out->shape == in->shape);
    CHECK(std::memcmp(out->values.data(), in->values.data(), sizeof(float) * in->numel()) == 0);
}

TEST_CASE("maxpool [[1,2],[3,4]] -> [[4]] and rejects oversize windows") {
    Tape<float> tape;
    auto in = make_tensor<float>({1, 2, 2}, {1, 2, 3, 4});
    auto out = maxpool2d(tape, in, 2);
    REQUIRE(out->shape == Shape{1, 1, 1});
    CHECK(out->values[0] == 4.0f);
    CHECK_THROWS_AS(maxpool2d(tape, in, 3), ShapeError);
}

TEST_CASE("maxpool on constant input sends gradient to one element per window") {
    Tape<float> tape;
    auto in = make_tensor<float>({1, 2, 2}, {7, 7, 7, 7});
    in->requires_grad = true;
    in->grad.assign(4, 0.0f);
    auto out = maxpool2d(tape, in, 2);
    auto loss = sum(tape, out);
    tape.backward(loss);
    CHECK(in->grad[0] == 1.0f);
    CHECK(in->grad[1] == 0.0f);
    CHECK(in->grad[2] == 0.0f);
    CHECK(in->grad[3] == 0.0f);
}

TEST_CASE("dense identity and zero weights") {
    Tape<float> tape;
    auto x = make_tensor<float>({2}, {3.0f, -4.0f});
    auto wi = make_tensor<float>({2, 2}, {1, 0, 0, 1});
    auto b0 = make_tensor<float>({2}, {0, 0});
    auto out = dense(tape, x, wi, b0);
    CHECK(out->values[0] == 3.0f);
    CHECK(out->values[1] == -4.0f);

    auto wz = make_tensor<float>({2, 2}, {0, 0, 0, 0});
    auto bb = make_tensor<float>({2}, {5.0f, 6.0f});
    auto out2 = dense(tape, x, wz, bb);
    CHECK(out2->values[0] == 5.0f);
    CHECK(out2->values[1] == 6.0f);
}

TEST_CASE("dense hand matrix-vector product") {
    Tape<float> tape;
    auto x = make_tensor<float>({2}, {1.0f, 2.0f});
    auto w = make_tensor<float>({2, 2}, {1, 1, 0, 1});
    auto b = make_tensor<float>({2}, {0.0f, 1.0f});
    auto out = dense(tape, x, w, b);
    CHECK(out->values[0] == 3.0f);
    CHECK(out->values[1] == 3.0f);
}

TEST_CASE("dense rejects mismatched dims") {
    Tape<float> tape;
    auto x = make_tensor<float>({3});
    auto w = make_tensor<float>({2, 2});
    auto b = make_tensor<float>({2});
    CHECK_THROWS_AS(dense(tape, x, w, b), ShapeError);
}

TEST_CASE("relu forward and subgradient at zero") {
    Tape<float> tape;
    auto x = make_tensor<float>({3}, {-1.0f, 0.0f, 2.0f}, true);
    auto out = relu(tape, x);
    CHECK(out->values[0] == 0.0f);
    CHECK(out->values[1] == 0.0f);
    CHECK(out->values[2] == 2.0f);
    auto loss = sum(tape, out);
    tape.backward(loss);
    CHECK(x->grad[0] == 0.0f);
    CHECK(x->grad[1] == 0.0f);  // subgradient 0 at exactly 0
    CHECK(x->grad[2] == 1.0f);
}

TEST_CASE("backward: sum gives all-ones gradient; x^2 at 3 gives 6") {
    {
        Tape<float> tape;
        Rng rng(5);
        auto x = randn<float>({7}, rng);
        auto loss = sum(tape, x);
        tape.backward(loss);
        for (float g : x->grad) CHECK(g == 1.0f);
    }
    {
        Tape<float> tape;
        auto x = make_tensor<float>({1}, {3.0f}, true);
        auto loss = sum(tape, mul(tape, x, x));
        tape.backward(loss);
        CHECK(x->grad[0] == 6.0f);
    }
}

TEST_CASE("backward demands a scalar produced on this tape") {
    Tape<float> tape;
    auto x = make_tensor<float>({2}, {1.0f, 2.0f}, true);
    auto y = relu(tape, x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);      // not scalar
    auto leaf = make_tensor<float>({1}, {1.0f}, true);
    CHECK_THROWS_AS(tape.backward(leaf), ContractError);   // not on tape
}

TEST_CASE("gradient accumulates additively across fan-out and separate passes") {
    Tape<float> tape;
    auto x = make_tensor<float>({2}, {1.0f, -2.0f}, true);
    auto a = mul(tape, x, x);
    auto l1 = sum(tape, a);
    auto l2 = sum(tape, x);
    auto total = add(tape, l1, l2);
    tape.backward(total);
    const float gx0 = x->grad[0];
    const float gx1 = x->grad[1];
    CHECK(gx0 == doctest::Approx(2.0f * 1.0f + 1.0f));
    CHECK(gx1 == doctest::Approx(2.0f * -2.0f + 1.0f));

    // sum of losses == sum of separate backward passes
    x->zero_grad();
    Tape<float> t1;
    auto a1 = mul(t1, x, x);
    auto s1 = sum(t1, a1);
    t1.backward(s1);
    Tape<float> t2;
    auto s2 = sum(t2, x);
    t2.backward(s2);
    CHECK(x->grad[0] == doctest::Approx(gx0));
    CHECK(x->grad[1] == doctest::Approx(gx1));
}

TEST_CASE("sgd_step updates and zeroes; lr=0 is a no-op") {
    auto p = make_tensor<float>({1}, {1.0f}, true);
    p->grad[0] = 2.0f;
    sgd_step<float>({p}, 0.1f);
    CHECK(p->values[0] == doctest::Approx(0.8f));
    CHECK(p->grad[0] == 0.0f);

    p->grad[0] = 5.0f;
    sgd_step<float>({p}, 0.0f);
    CHECK(p->values[0] == doctest::Approx(0.8f));

    auto q = make_tensor<float>({1});
    CHECK_THROWS_AS(sgd_step<float>({q}, 0.1f), ContractError);
}

TEST_CASE("two sgd steps on a quadratic strictly decrease the loss") {
    auto p = make_tensor<float>({1}, {4.0f}, true);
    auto eval = [&]() {
        Tape<float> tape;
        auto l = sum(tape, mul(tape, p, p));
        return std::pair{l, tape.size()};
    };
    std::vector<float> losses;
    for (int i = 0; i < 3; ++i) {
        Tape<float> tape;
        auto l = sum(tape, mul(tape, p, p));
        losses.push_back(l->values[0]);
        tape.backward(l);
        sgd_step<float>({p}, 0.1f);
    }
    CHECK(losses[1] < losses[0]);
    CHECK(losses[2] < losses[1]);
    (void)eval;
}

TEST_CASE("forward pass is deterministic") {
    Rng rng(9);
    auto run = [&](const TensorPtr<float>& x, const TensorPtr<float>& k, const TensorPtr<float>& b) {
        Tape<float> tape(false);
        auto out = relu(tape, conv2d_valid(tape, x, k, b));
        return out->values;
    };
    auto x = randn<float>({2, 6, 6}, rng, false);
    auto k = randn<float>({4, 2, 2, 2}, rng, false);
    auto b = randn<float>({4}, rng, false);
    auto v1 = run(x, k, b);
    auto v2 = run(x, k, b);
    CHECK(std::memcmp(v1.data(), v2.data(), v1.size() * sizeof(float)) == 0);
}

// --- finite-difference verification -----------------------------------------

TEST_CASE("grad_check: dense+relu fragment") {
    Rng rng(21);
    for (int inst = 0; inst < 10; ++inst) {
        auto w = randn<double>({3, 4}, rng);
        auto b = randn<double>({3}, rng);
        auto x = randn<double>({4}, rng);
        auto frag = [&x](Tape<double>& tape, const std::vector<TensorPtr<double>>& ps) {
            auto h = relu(tape, dense(tape, x, ps[0], ps[1]));
            return sum(tape, mul(tape, h, h));
        };
        auto report = grad_check(frag, {w, b});
        CHECK(report.pass);
        CHECK(report.max_rel_error < 1e-4);
    }
}

TEST_CASE("grad_check: conv2d fragment") {
    Rng rng(22);
    for (int inst = 0; inst < 10; ++inst) {
        auto k = randn<double>({2, 1, 2, 2}, rng);
        auto b = randn<double>({2}, rng);
        auto x = randn<double>({1, 4, 4}, rng);
        auto frag = [&x](Tape<double>& tape, const std::vector<TensorPtr<double>>& ps) {
            auto h = relu(tape, conv2d_valid(tape, x, ps[0], ps[1]));
            return sum(tape, mul(tape, h, h));
        };
        auto report = grad_check(frag, {k, b});
        CHECK(report.pass);
    }
}

TEST_CASE("grad_check: random two-layer net incl. maxpool") {
    Rng rng(23);
    for (int inst = 0; inst < 10; ++inst) {
        auto k = randn<double>({3, 1, 2, 2}, rng);
        auto kb = randn<double>({3}, rng);
        auto w = randn<double>({2, 12}, rng);
        auto wb = randn<double>({2}, rng);
        auto x = randn<double>({1, 5, 5}, rng);
        auto frag = [&x](Tape<double>& tape, const std::vector<TensorPtr<double>>& ps) {
            auto h = maxpool2d(tape, relu(tape, conv2d_valid(tape, x, ps[0], ps[1])), 2);
            auto flat = reshape(tape, h, {1, 12});
            auto y = relu(tape, dense(tape, flat, ps[2], ps[3]));
            return sum(tape, mul(tape, y, y));
        };
        auto report = grad_check(frag, {k, kb, w, wb});
        CHECK(report.max_rel_error < 1e-4);
    }
}

TEST_CASE("grad_check: sqrt/exp/min_const chain (negative-loss shape)") {
    Rng rng(24);
    for (int inst = 0; inst < 10; ++inst) {
        auto a = randn<double>({2, 5}, rng);
        auto b = randn<double>({2, 5}, rng);
        auto frag = [](Tape<double>& tape, const std::vector<TensorPtr<double>>& ps) {
            auto diff = sub(tape, ps[0], ps[1]);
            auto d = sqrt_elem(tape, sum_rows(tape, mul(tape, diff, diff)));
            auto e = exp_elem(tape, min_const(tape, d, 20.0));
            return scale(tape, sum(tape, e), -0.5);
        };
        auto report = grad_check(frag, {a, b});
        CHECK(report.max_rel_error < 1e-4);
    }
}

TEST_CASE("grad_check flags a corrupted backward rule") {
    Rng rng(25);
    auto w = randn<double>({3, 3}, rng);
    auto x = randn<double>({3}, rng);
    auto frag = [&x](Tape<double>& tape, const std::vector<TensorPtr<double>>& ps) {
        auto b = make_tensor<double>({3});
        auto h = dense(tape, x, ps[0], b);
        auto loss = sum(tape, mul(tape, h, h));
        // deliberately corrupt the recorded gradient flow
        tape.record(loss, [&ps]() { ps[0]->grad[0] += 1.0; });
        return loss;
    };
    auto report = grad_check(frag, {w});
    CHECK_FALSE(report.pass);
    CHECK(report.max_rel_error > 1e-3);
}

TEST_CASE("no-grad tape records nothing") {
    Tape<float> tape(false);
    Rng rng(31);
    auto x = randn<float>({4}, rng, true);
    auto w = randn<float>({2, 4}, rng, true);
    auto b = randn<float>({2}, rng, true);
    auto out = relu(tape, dense(tape, x, w, b));
    CHECK(tape.size() == 0);
    CHECK_FALSE(out->requires_grad);
}
