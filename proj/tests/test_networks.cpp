#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "pxrl/networks.hpp"
#include "pxrl/rng.hpp"

using namespace pxrl;

namespace {

TensorPtr<float> random_obs(const EncoderSpec& spec, Rng& rng) {
    auto t = make_tensor<float>({spec.in_channels, spec.in_h, spec.in_w});
    for (auto& v : t->values) v = rng.uniform(0.0f, 1.0f);
    return t;
}

void zero_all(AgentBundle<float>& b) {
    for (auto& [name, p] : all_params(b)) std::fill(p->values.begin(), p->values.end(), 0.0f);
}

}  // namespace

// Appendix layer tables, audited shape by shape for all three variants.
TEST_CASE("shape audit: base variant on 8x8") {
    EncoderSpec spec;
    spec.latent = 10;
    const auto s = encoder_shapes(spec);
    CHECK(s.c1 == 16);
    CHECK(s.h1 == 7);
    CHECK(s.w1 == 7);
    CHECK(s.c2 == 32);
    CHECK(s.h2 == 6);
    CHECK(s.w2 == 6);
    CHECK(s.hp == 3);
    CHECK(s.wp == 3);
    CHECK(s.flat == 288);
    CHECK(s.fc_sizes == std::vector<int>{32, 10});

    auto b = make_bundle<float>(spec, 4, 0.0f, 0.9f, {}, 1);
    CHECK(b.enc.convs[0].kernels->shape == Shape{16, 1, 2, 2});
    CHECK(b.enc.convs[1].kernels->shape == Shape{32, 16, 2, 2});
    CHECK(b.enc.fcs[0].weights->shape == Shape{32, 288});
    CHECK(b.enc.fcs[1].weights->shape == Shape{10, 32});
    // Q head: one hidden layer of 16 onto a scalar; input is [z; one-hot a]
    CHECK(b.q.layers[0].weights->shape == Shape{16, 14});
    CHECK(b.q.layers[1].weights->shape == Shape{1, 16});
    // T head: hidden 16, output |z|, no final activation
    CHECK(b.t.layers[0].weights->shape == Shape{16, 14});
    CHECK(b.t.layers[1].weights->shape == Shape{10, 16});
}

TEST_CASE("shape audit: deep-encoder and deep-q variants") {
    EncoderSpec deep_e;
    deep_e.variant = Variant::kDeepEncoder;
    deep_e.latent = 12;
    const auto se = encoder_shapes(deep_e);
    CHECK(se.c2 == 48);
    CHECK(se.flat == 48 * 3 * 3);
    CHECK(se.fc_sizes == std::vector<int>{48, 32, 12});
    auto be = make_bundle<float>(deep_e, 4, 0.0f, 0.9f, {}, 1);
    CHECK(be.enc.convs[1].kernels->shape == Shape{48, 16, 2, 2});
    CHECK(be.enc.fcs[0].weights->shape == Shape{48, 432});
    CHECK(be.enc.fcs[1].weights->shape == Shape{32, 48});
    CHECK(be.enc.fcs[2].weights->shape == Shape{12, 32});

    EncoderSpec deep_q;
    deep_q.variant = Variant::kDeepQ;
    deep_q.latent = 12;
    auto bq = make_bundle<float>(deep_q, 4, 0.0f, 0.9f, {}, 1);
    REQUIRE(bq.q.layers.size() == 3);
    CHECK(bq.q.layers[0].weights->shape == Shape{32, 16});
    CHECK(bq.q.layers[1].weights->shape == Shape{16, 32});
    CHECK(bq.q.layers[2].weights->shape == Shape{1, 16});
}

TEST_CASE("encode: batched shape chain 16x7x7 -> 32x6x6 -> 32x3x3 -> 32 -> |z|") {
    EncoderSpec spec;
    spec.latent = 10;
    auto b = make_bundle<float>(spec, 4, 0.0f, 0.9f, {}, 3);
    Rng rng(5);
    auto obs = make_tensor<float>({2, 1, 8, 8});
    for (auto& v : obs->values) v = rng.uniform(0.0f, 1.0f);
    Tape<float> tape(false);
    auto z = encode(tape, b.enc, b.spec, obs);
    CHECK(z->shape == Shape{2, 10});
}

TEST_CASE("encode: zero observation with zero biases gives zero latent") {
    EncoderSpec spec;
    spec.latent = 8;
    auto b = make_bundle<float>(spec, 4, 0.0f, 0.9f, {}, 4);
    for (auto& [name, p] : online_params(b))
        if (name.find("bias") != std::string::npos)
            std::fill(p->values.begin(), p->values.end(), 0.0f);
    auto obs = make_tensor<float>({1, 8, 8});
    Tape<float> tape(false);
    auto z = encode(tape, b.enc, b.spec, obs);
    for (float v : z->values) CHECK(v == 0.0f);
}

TEST_CASE("encode: deterministic and nonnegative") {
    EncoderSpec spec;
    spec.latent = 16;
    auto b = make_bundle<float>(spec, 4, 0.0f, 0.9f, {}, 5);
    Rng rng(6);
    auto obs = random_obs(spec, rng);
    Tape<float> t1(false), t2(false);
    auto z1 = encode(t1, b.enc, b.spec, obs);
    auto z2 = encode(t2, b.enc, b.spec, obs);
    CHECK(std::memcmp(z1->values.data(), z2->values.data(), sizeof(float) * z1->numel()) == 0);
    for (float v : z1->values) CHECK(v >= 0.0f);
}

TEST_CASE("encode rejects observations that do not match the spec") {
    EncoderSpec spec;
    auto b = make_bundle<float>(spec, 4, 0.0f, 0.9f, {}, 7);
    auto bad = make_tensor<float>({1, 5, 5});
    Tape<float> tape(false);
    CHECK_THROWS_AS(encode(tape, b.enc, b.spec, bad), ShapeError);
}

TEST_CASE("fixed-seed construction is bit-identical; different seeds differ") {
    EncoderSpec spec;
    spec.latent = 10;
    auto a = make_bundle<float>(spec, 4, 0.0f, 0.9f, {}, 42);
    auto b = make_bundle<float>(spec, 4, 0.0f, 0.9f, {}, 42);
    auto c = make_bundle<float>(spec, 4, 0.0f, 0.9f, {}, 43);
    auto pa = all_params(a), pb = all_params(b), pc = all_params(c);
    bool all_equal = true, any_differ = false;
    for (size_t i = 0; i < pa.size(); ++i) {
        all_equal &= pa[i].second->values == pb[i].second->values;
        any_differ |= pa[i].second->values != pc[i].second->values;
    }
    CHECK(all_equal);
    CHECK(any_differ);
}

TEST_CASE("q_value: zero parameters give zero for every action") {
    EncoderSpec spec;
    spec.latent = 4;
    auto b = make_bundle<float>(spec, 4, 0.0f, 0.9f, {}, 8);
    zero_all(b);
    Tape<float> tape(false);
    auto z = make_tensor<float>({1, 4}, {0.3f, -0.1f, 0.7f, 0.2f});
    const auto q = q_all_actions(tape, b.q, z, 4);
    for (float v : q) CHECK(v == 0.0f);
}

TEST_CASE("q_value symmetry: zeroed one-hot columns make actions indistinguishable") {
    EncoderSpec spec;
    spec.latent = 4;
    auto b = make_bundle<float>(spec, 4, 0.0f, 0.9f, {}, 9);
    // zero the action block of the first Q layer for actions 1 and 2
    auto& w = b.q.layers[0].weights;
    const int in = 4 + 4;
    for (int m = 0; m < w->shape[0]; ++m) {
        w->values[static_cast<size_t>(m) * in + 4 + 1] = 0.0f;
        w->values[static_cast<size_t>(m) * in + 4 + 2] = 0.0f;
    }
    Tape<float> tape(false);
    auto z = make_tensor<float>({1, 4}, {0.5f, 0.25f, 0.0f, 1.0f});
    const auto q = q_all_actions(tape, b.q, z, 4);
    CHECK(q[1] == q[2]);
}

TEST_CASE("greedy action is the argmax of per-action evaluations") {
    std::vector<float> q = {0.1f, 0.9f, 0.3f, 0.9f};
    CHECK(argmax_row(q.data(), 4) == 1);  // first max wins ties
}

TEST_CASE("predict_delta: zero T gives zero delta; tau reduces to identity") {
    EncoderSpec spec;
    spec.latent = 5;
    auto b = make_bundle<float>(spec, 4, 0.0f, 0.9f, {}, 10);
    for (auto& layer : b.t.layers) {
        std::fill(layer.weights->values.begin(), layer.weights->values.end(), 0.0f);
        std::fill(layer.bias->values.begin(), layer.bias->values.end(), 0.0f);
    }
    Tape<float> tape(false);
    auto z = make_tensor<float>({1, 5}, {1, 2, 3, 4, 5});
    auto d = predict_delta(tape, b.t, z, {2}, 4);
    for (float v : d->values) CHECK(v == 0.0f);
    auto t = tau(tape, b.t, z, {2}, 4);
    CHECK(t->values == z->values);
}

TEST_CASE("tau residual identity holds exactly for random parameters") {
    EncoderSpec spec;
    spec.latent = 6;
    auto b = make_bundle<float>(spec, 4, 0.0f, 0.9f, {}, 11);
    Rng rng(12);
    Tape<float> tape(false);
    auto z = make_tensor<float>({3, 6});
    for (auto& v : z->values) v = rng.uniform(-1.0f, 1.0f);
    std::vector<int> actions = {0, 3, 1};
    auto d = predict_delta(tape, b.t, z, actions, 4);
    auto t = tau(tape, b.t, z, actions, 4);
    for (long i = 0; i < t->numel(); ++i)
        CHECK(t->values[i] == z->values[i] + d->values[i]);
    CHECK(b.t.layers[0].weights->shape[0] == 16);  // hidden width per the layer table
}

TEST_CASE("sync_target copies online params bit-exactly and is idempotent") {
    EncoderSpec spec;
    spec.latent = 4;
    auto b = make_bundle<float>(spec, 4, 0.0f, 0.9f, {}, 13);
    // drift online away from targets
    for (auto& [name, p] : online_params(b))
        for (auto& v : p->values) v += 0.125f;
    sync_target(b);
    Tape<float> tape(false);
    Rng rng(14);
    auto z = make_tensor<float>({1, 4});
    for (auto& v : z->values) v = rng.uniform(-1.0f, 1.0f);
    const auto q_on = q_all_actions(tape, b.q, z, 4);
    const auto q_tg = q_all_actions(tape, b.target_q, z, 4);
    CHECK(q_on == q_tg);

    auto snapshot = b.target_q.layers[0].weights->values;
    sync_target(b);
    CHECK(b.target_q.layers[0].weights->values == snapshot);
}

TEST_CASE("recurrent encode: zero recurrent weights reduce to feedforward") {
    EncoderSpec rec;
    rec.latent = 6;
    rec.recurrent = true;
    auto rb = make_bundle<float>(rec, 4, 0.0f, 0.9f, {}, 15);

    EncoderSpec ff;
    ff.latent = 6;
    auto fb = make_bundle<float>(ff, 4, 0.0f, 0.9f, {}, 15);
    // copy the shared feedforward layers; combiner weights: [feats | z_prev]
    for (size_t i = 0; i < fb.enc.convs.size(); ++i) {
        rb.enc.convs[i].kernels->values = fb.enc.convs[i].kernels->values;
        rb.enc.convs[i].bias->values = fb.enc.convs[i].bias->values;
    }
    rb.enc.fcs[0].weights->values = fb.enc.fcs[0].weights->values;
    rb.enc.fcs[0].bias->values = fb.enc.fcs[0].bias->values;
    auto& comb = rb.enc.fcs[1];
    const auto& last = fb.enc.fcs[1];
    const int feats = 32, dz = 6;
    for (int m = 0; m < dz; ++m) {
        for (int n = 0; n < feats; ++n)
            comb.weights->values[static_cast<size_t>(m) * (feats + dz) + n] =
                last.weights->values[static_cast<size_t>(m) * feats + n];
        for (int n = 0; n < dz; ++n)
            comb.weights->values[static_cast<size_t>(m) * (feats + dz) + feats + n] = 0.0f;
    }
    comb.bias->values = last.bias->values;

    Rng rng(16);
    auto obs = random_obs(ff, rng);
    Tape<float> tape(false);
    auto z_prev = make_tensor<float>({6});
    auto z_rec = recurrent_encode(tape, rb.enc, rb.spec, obs, z_prev);
    auto z_ff = encode(tape, fb.enc, fb.spec, obs);
    for (int i = 0; i < 6; ++i) CHECK(z_rec->values[i] == doctest::Approx(z_ff->values[i]));
}

TEST_CASE("recurrent encode: history dependence and nonnegativity") {
    EncoderSpec rec;
    rec.latent = 6;
    rec.recurrent = true;
    auto b = make_bundle<float>(rec, 4, 0.0f, 0.9f, {}, 17);
    Rng rng(18);
    auto obs = random_obs(rec, rng);
    Tape<float> tape(false);
    auto zp0 = make_tensor<float>({6});
    auto zp1 = make_tensor<float>({6});
    for (auto& v : zp1->values) v = rng.uniform(0.0f, 1.0f);
    auto za = recurrent_encode(tape, b.enc, b.spec, obs, zp0);
    auto zb = recurrent_encode(tape, b.enc, b.spec, obs, zp1);
    CHECK(za->values != zb->values);
    for (float v : za->values) CHECK(v >= 0.0f);
    // plain encode refuses a recurrent spec
    CHECK_THROWS_AS(encode(tape, b.enc, b.spec, obs), ContractError);
}
