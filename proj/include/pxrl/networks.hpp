#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pxrl/rng.hpp"
#include "pxrl/tensor.hpp"

namespace pxrl {

enum class Variant { kBase, kDeepEncoder, kDeepQ };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::kBase: return "base";
        case Variant::kDeepEncoder: return "deep-encoder";
        case Variant::kDeepQ: return "deep-q";
    }
    return "base";
}

inline Variant variant_from_name(const std::string& s) {
    if (s == "base") return Variant::kBase;
    if (s == "deep-encoder") return Variant::kDeepEncoder;
    if (s == "deep-q") return Variant::kDeepQ;
    throw ConfigError("unknown architecture variant '" + s + "'");
}

struct EncoderSpec {
    Variant variant = Variant::kBase;
    int latent = 10;
    int in_channels = 1;
    int in_h = 8;
    int in_w = 8;
    bool recurrent = false;
};

template <class T>
struct ConvLayer {
    TensorPtr<T> kernels;  // [Cout,Cin,K,K]
    TensorPtr<T> bias;     // [Cout]
};

template <class T>
struct DenseLayer {
    TensorPtr<T> weights;  // [M,N]
    TensorPtr<T> bias;     // [M]
};

template <class T>
struct EncoderParams {
    std::vector<ConvLayer<T>> convs;
    std::vector<DenseLayer<T>> fcs;  // final layer is the recurrent combiner when spec.recurrent
};

template <class T>
struct MlpParams {
    std::vector<DenseLayer<T>> layers;
};

struct LossWeights {
    double q = 1e-4;
    double neg = 0.0;
    double pos = 0.0;
};

// Online encoder/Q/T plus hard-copied target encoder/Q, and the scalars the
// losses need. gamma_pred is the horizon of the positive sampling loss;
// gamma_q is the TD discount.
template <class T>
struct AgentBundle {
    EncoderSpec spec;
    int num_actions = 4;
    EncoderParams<T> enc;
    MlpParams<T> q;
    MlpParams<T> t;
    EncoderParams<T> target_enc;
    MlpParams<T> target_q;
    T gamma_pred = T(0);
    T gamma_q = T(0.9);
    LossWeights weights;
};

// --- construction -----------------------------------------------------------

namespace detail {

template <class T>
TensorPtr<T> init_param(Shape shape, int fan_in, Rng& rng) {
    auto t = make_tensor<T>(std::move(shape), true);
    const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
    for (auto& v : t->values) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

// Weights uniform in +-1/sqrt(fan_in); biases start at zero so initial
// features carry only input-dependent signal.
template <class T>
ConvLayer<T> init_conv(int cout, int cin, int k, Rng& rng) {
    const int fan = cin * k * k;
    return {init_param<T>({cout, cin, k, k}, fan, rng), make_tensor<T>({cout}, true)};
}

template <class T>
DenseLayer<T> init_dense(int m, int n, Rng& rng) {
    return {init_param<T>({m, n}, n, rng), make_tensor<T>({m}, true)};
}

}  // namespace detail

// Spatial sizes after the conv/pool stack, and the flattened feature width.
struct EncoderShapes {
    int c1, h1, w1;       // after first conv
    int c2, h2, w2;       // after second conv
    int hp, wp;           // after maxpool
    int flat;             // pooled features, flattened
    std::vector<int> fc_sizes;  // fully connected output sizes, last = latent
};

inline EncoderShapes encoder_shapes(const EncoderSpec& spec) {
    EncoderShapes s{};
    const int k = 2;
    s.c1 = 16;
    s.h1 = spec.in_h - k + 1;
    s.w1 = spec.in_w - k + 1;
    s.c2 = spec.variant == Variant::kDeepEncoder ? 48 : 32;
    s.h2 = s.h1 - k + 1;
    s.w2 = s.w1 - k + 1;
    if (s.h2 < 1 || s.w2 < 1)
        throw ShapeError("encoder_shapes: input " + std::to_string(spec.in_h) + "x" +
                         std::to_string(spec.in_w) + " too small for two 2x2 convolutions");
    s.hp = s.h2 / 2;
    s.wp = s.w2 / 2;
    if (s.hp < 1 || s.wp < 1)
        throw ShapeError("encoder_shapes: feature map too small for 2x2 pooling");
    s.flat = s.c2 * s.hp * s.wp;
    if (spec.variant == Variant::kDeepEncoder)
        s.fc_sizes = {48, 32, spec.latent};
    else
        s.fc_sizes = {32, spec.latent};
    return s;
}

template <class T>
EncoderParams<T> make_encoder(const EncoderSpec& spec, Rng& rng) {
    EncoderParams<T> enc;
    const EncoderShapes s = encoder_shapes(spec);
    enc.convs.push_back(detail::init_conv<T>(s.c1, spec.in_channels, 2, rng));
    enc.convs.push_back(detail::init_conv<T>(s.c2, s.c1, 2, rng));
    int in = s.flat;
    for (size_t i = 0; i < s.fc_sizes.size(); ++i) {
        int layer_in = in;
        if (spec.recurrent && i + 1 == s.fc_sizes.size()) layer_in += spec.latent;
        enc.fcs.push_back(detail::init_dense<T>(s.fc_sizes[i], layer_in, rng));
        in = s.fc_sizes[i];
    }
    return enc;
}

template <class T>
MlpParams<T> make_q_head(const EncoderSpec& spec, int num_actions, Rng& rng) {
    MlpParams<T> q;
    int in = spec.latent + num_actions;
    std::vector<int> sizes = spec.variant == Variant::kDeepQ ? std::vector<int>{32, 16, 1}
                                                             : std::vector<int>{16, 1};
    for (int m : sizes) {
        q.layers.push_back(detail::init_dense<T>(m, in, rng));
        in = m;
    }
    return q;
}

template <class T>
MlpParams<T> make_t_head(const EncoderSpec& spec, int num_actions, Rng& rng) {
    MlpParams<T> t;
    t.layers.push_back(detail::init_dense<T>(16, spec.latent + num_actions, rng));
    t.layers.push_back(detail::init_dense<T>(spec.latent, 16, rng));
    return t;
}

template <class T>
void copy_values(const EncoderParams<T>& from, EncoderParams<T>& to) {
    for (size_t i = 0; i < from.convs.size(); ++i) {
        to.convs[i].kernels->values = from.convs[i].kernels->values;
        to.convs[i].bias->values = from.convs[i].bias->values;
    }
    for (size_t i = 0; i < from.fcs.size(); ++i) {
        to.fcs[i].weights->values = from.fcs[i].weights->values;
        to.fcs[i].bias->values = from.fcs[i].bias->values;
    }
}

template <class T>
void copy_values(const MlpParams<T>& from, MlpParams<T>& to) {
    for (size_t i = 0; i < from.layers.size(); ++i) {
        to.layers[i].weights->values = from.layers[i].weights->values;
        to.layers[i].bias->values = from.layers[i].bias->values;
    }
}

// Targets become bit-identical copies of the online encoder and Q head.
template <class T>
void sync_target(AgentBundle<T>& bundle) {
    copy_values(bundle.enc, bundle.target_enc);
    copy_values(bundle.q, bundle.target_q);
}

template <class T>
AgentBundle<T> make_bundle(const EncoderSpec& spec, int num_actions, T gamma_pred, T gamma_q,
                           const LossWeights& weights, uint64_t init_seed) {
    Rng rng(init_seed);
    AgentBundle<T> b;
    b.spec = spec;
    b.num_actions = num_actions;
    b.enc = make_encoder<T>(spec, rng);
    b.q = make_q_head<T>(spec, num_actions, rng);
    b.t = make_t_head<T>(spec, num_actions, rng);
    // targets start as copies of the online initialization
    Rng rng2(init_seed);
    b.target_enc = make_encoder<T>(spec, rng2);
    b.target_q = make_q_head<T>(spec, num_actions, rng2);
    sync_target(b);
    b.gamma_pred = gamma_pred;
    b.gamma_q = gamma_q;
    b.weights = weights;
    return b;
}

// --- named parameter enumeration --------------------------------------------

template <class T>
using NamedParam = std::pair<std::string, TensorPtr<T>>;

template <class T>
void append_params(const std::string& prefix, const EncoderParams<T>& enc, std::vector<NamedParam<T>>& out) {
    for (size_t i = 0; i < enc.convs.size(); ++i) {
        out.emplace_back(prefix + "/conv" + std::to_string(i) + "/kernels", enc.convs[i].kernels);
        out.emplace_back(prefix + "/conv" + std::to_string(i) + "/bias", enc.convs[i].bias);
    }
    for (size_t i = 0; i < enc.fcs.size(); ++i) {
        out.emplace_back(prefix + "/fc" + std::to_string(i) + "/weights", enc.fcs[i].weights);
        out.emplace_back(prefix + "/fc" + std::to_string(i) + "/bias", enc.fcs[i].bias);
    }
}

template <class T>
void append_params(const std::string& prefix, const MlpParams<T>& mlp, std::vector<NamedParam<T>>& out) {
    for (size_t i = 0; i < mlp.layers.size(); ++i) {
        out.emplace_back(prefix + "/fc" + std::to_string(i) + "/weights", mlp.layers[i].weights);
        out.emplace_back(prefix + "/fc" + std::to_string(i) + "/bias", mlp.layers[i].bias);
    }
}

// Online parameters only (the trainable set).
template <class T>
std::vector<NamedParam<T>> online_params(const AgentBundle<T>& b) {
    std::vector<NamedParam<T>> out;
    append_params("enc", b.enc, out);
    append_params("q", b.q, out);
    append_params("t", b.t, out);
    return out;
}

// Everything, including target copies (checkpoint granularity).
template <class T>
std::vector<NamedParam<T>> all_params(const AgentBundle<T>& b) {
    auto out = online_params(b);
    append_params("target/enc", b.target_enc, out);
    append_params("target/q", b.target_q, out);
    return out;
}

// --- forward passes ----------------------------------------------------------

// Observation [B,C,H,W] (or [C,H,W]) -> nonnegative latent [B,latent].
template <class T>
TensorPtr<T> encode(Tape<T>& tape, const EncoderParams<T>& enc, const EncoderSpec& spec,
                    const TensorPtr<T>& obs) {
    if (spec.recurrent)
        throw ContractError("encode: recurrent spec requires recurrent_encode with a previous latent");
    const bool batched = obs->shape.size() == 4;
    const int B = batched ? obs->shape[0] : 1;
    const int C = batched ? obs->shape[1] : obs->shape[0];
    const int H = batched ? obs->shape[2] : obs->shape[1];
    const int W = batched ? obs->shape[3] : obs->shape[2];
    if (C != spec.in_channels || H != spec.in_h || W != spec.in_w)
        throw ShapeError("encode: observation " + shape_str(obs->shape) + " does not match spec [" +
                         std::to_string(spec.in_channels) + "," + std::to_string(spec.in_h) + "," +
                         std::to_string(spec.in_w) + "]");
    auto x = obs;
    if (!batched) x = reshape(tape, x, {1, C, H, W});
    x = relu(tape, conv2d_valid(tape, x, enc.convs[0].kernels, enc.convs[0].bias));
    x = relu(tape, conv2d_valid(tape, x, enc.convs[1].kernels, enc.convs[1].bias));
    x = maxpool2d(tape, x, 2);
    const EncoderShapes s = encoder_shapes(spec);
    x = reshape(tape, x, {B, s.flat});
    for (const auto& fc : enc.fcs)
        x = relu(tape, dense(tape, x, fc.weights, fc.bias));
    return batched ? x : reshape(tape, x, {spec.latent});
}

// Penultimate feedforward features concatenated with the previous latent,
// passed through the final (combiner) layer. z_prev must be zeros at episode
// start.
template <class T>
TensorPtr<T> recurrent_encode(Tape<T>& tape, const EncoderParams<T>& enc, const EncoderSpec& spec,
                              const TensorPtr<T>& obs, const TensorPtr<T>& z_prev) {
    if (!spec.recurrent) throw ContractError("recurrent_encode: spec is not recurrent");
    const bool batched = obs->shape.size() == 4;
    const int B = batched ? obs->shape[0] : 1;
    auto x = obs;
    if (!batched) x = reshape(tape, x, {1, spec.in_channels, spec.in_h, spec.in_w});
    auto zp = z_prev;
    if (zp->shape.size() == 1) zp = reshape(tape, zp, {1, spec.latent});
    if (zp->shape != Shape{B, spec.latent})
        throw ShapeError("recurrent_encode: z_prev " + shape_str(z_prev->shape) + " != [B," +
                         std::to_string(spec.latent) + "]");
    x = relu(tape, conv2d_valid(tape, x, enc.convs[0].kernels, enc.convs[0].bias));
    x = relu(tape, conv2d_valid(tape, x, enc.convs[1].kernels, enc.convs[1].bias));
    x = maxpool2d(tape, x, 2);
    const EncoderShapes s = encoder_shapes(spec);
    x = reshape(tape, x, {B, s.flat});
    for (size_t i = 0; i + 1 < enc.fcs.size(); ++i)
        x = relu(tape, dense(tape, x, enc.fcs[i].weights, enc.fcs[i].bias));
    x = concat_cols(tape, x, zp);
    x = relu(tape, dense(tape, x, enc.fcs.back().weights, enc.fcs.back().bias));
    return batched ? x : reshape(tape, x, {spec.latent});
}

template <class T>
TensorPtr<T> one_hot_actions(const std::vector<int>& actions, int num_actions) {
    auto t = make_tensor<T>({static_cast<int>(actions.size()), num_actions});
    for (size_t b = 0; b < actions.size(); ++b) {
        if (actions[b] < 0 || actions[b] >= num_actions)
            throw ContractError("one_hot_actions: action " + std::to_string(actions[b]) + " out of range");
        t->values[b * num_actions + actions[b]] = T(1);
    }
    return t;
}

template <class T>
TensorPtr<T> mlp_forward(Tape<T>& tape, const MlpParams<T>& mlp, const TensorPtr<T>& in,
                         bool final_activation) {
    auto x = in;
    for (size_t i = 0; i < mlp.layers.size(); ++i) {
        x = dense(tape, x, mlp.layers[i].weights, mlp.layers[i].bias);
        if (i + 1 < mlp.layers.size() || final_activation) x = relu(tape, x);
    }
    return x;
}

// Q(z,a) for one action per row: [B,latent] x actions -> [B].
template <class T>
TensorPtr<T> q_value(Tape<T>& tape, const MlpParams<T>& q, const TensorPtr<T>& z,
                     const std::vector<int>& actions, int num_actions) {
    auto onehot = one_hot_actions<T>(actions, num_actions);
    auto x = concat_cols(tape, z, onehot);
    auto out = mlp_forward(tape, q, x, false);  // [B,1]
    return reshape(tape, out, {static_cast<int>(actions.size())});
}

// T(z,a): unconstrained latent delta, no final activation.
template <class T>
TensorPtr<T> predict_delta(Tape<T>& tape, const MlpParams<T>& t, const TensorPtr<T>& z,
                           const std::vector<int>& actions, int num_actions) {
    auto onehot = one_hot_actions<T>(actions, num_actions);
    auto x = concat_cols(tape, z, onehot);
    return mlp_forward(tape, t, x, false);  // [B,latent]
}

// tau(z,a) = z + T(z,a); the residual form is load-bearing.
template <class T>
TensorPtr<T> tau(Tape<T>& tape, const MlpParams<T>& t, const TensorPtr<T>& z,
                 const std::vector<int>& actions, int num_actions) {
    return add(tape, z, predict_delta(tape, t, z, actions, num_actions));
}

// Q over every action: returns [B,A] values. Expands to a [B*A] batch so one
// head forward covers every (row, action) pair; pass a grad-disabled tape for
// action selection.
template <class T>
std::vector<T> q_all_actions(Tape<T>& tape, const MlpParams<T>& q, const TensorPtr<T>& z,
                             int num_actions) {
    const int B = z->shape.size() == 2 ? z->shape[0] : 1;
    const int dz = z->shape.size() == 2 ? z->shape[1] : z->shape[0];
    auto z_rep = make_tensor<T>({B * num_actions, dz});
    std::vector<int> actions(static_cast<size_t>(B) * num_actions);
    for (int b = 0; b < B; ++b)
        for (int a = 0; a < num_actions; ++a) {
            std::memcpy(z_rep->values.data() + (static_cast<long>(b) * num_actions + a) * dz,
                        z->values.data() + static_cast<long>(b) * dz, sizeof(T) * dz);
            actions[static_cast<size_t>(b) * num_actions + a] = a;
        }
    auto qa = q_value(tape, q, z_rep, actions, num_actions);
    return qa->values;  // [B*A] row-major in (b, a)
}

inline int argmax_row(const float* row, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (row[i] > row[best]) best = i;
    return best;
}

inline int argmax_row(const double* row, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (row[i] > row[best]) best = i;
    return best;
}

}  // namespace pxrl
