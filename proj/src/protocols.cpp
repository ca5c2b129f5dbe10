#include "pxrl/protocols.hpp"

#include <algorithm>
#include <cstring>
#include <limits>

namespace pxrl {

std::vector<float> unit_state_responses(const AgentBundle<float>& bundle, const Env& env, int unit) {
    if (unit < 0 || unit >= bundle.spec.latent)
        throw ContractError("unit_state_responses: unit " + std::to_string(unit) + " out of range");
    const int S = env.num_states();
    Shape os{bundle.spec.in_channels, bundle.spec.in_h, bundle.spec.in_w};
    Shape packed_shape{S, os[0], os[1], os[2]};
    auto packed = make_tensor<float>(packed_shape);
    const size_t stride = static_cast<size_t>(numel_of(os));
    for (int s = 0; s < S; ++s) {
        auto img = env.render_state(s);
        std::memcpy(packed->values.data() + s * stride, img.data(), stride * sizeof(float));
    }
    Tape<float> tape(false);
    auto z = encode(tape, bundle.enc, bundle.spec, packed);
    std::vector<float> out(S);
    for (int s = 0; s < S; ++s) out[s] = z->values[static_cast<size_t>(s) * bundle.spec.latent + unit];
    return out;
}

namespace {

// Greedy contiguous 3-cell walk from the best-scoring seed cell. `sign` +1
// picks high-response cells, -1 low-response; `banned` cells are excluded.
std::array<int, 3> greedy_path(const GridEnv& env, const std::vector<float>& resp, int sign,
                               const std::vector<bool>& banned) {
    const int S = env.num_states();
    int seed = -1;
    for (int s = 0; s < S; ++s) {
        if (banned[s]) continue;
        if (seed < 0 || sign * resp[s] > sign * resp[seed]) seed = s;
    }
    if (seed < 0) throw ProbeSelectionError("swap probes: no candidate cells remain");

    std::array<int, 3> path{seed, -1, -1};
    std::vector<bool> used = banned;
    used[seed] = true;
    for (int k = 1; k < 3; ++k) {
        auto [cx, cy] = env.state_coords(path[k - 1]);
        int best = -1;
        for (int a = 0; a < 4; ++a) {
            auto nb = env.move({cx, cy}, a);
            if (nb == std::make_pair(cx, cy)) continue;
            const int s = env.state_of_cell(env.cell_id(nb.first, nb.second));
            if (s < 0 || used[s]) continue;
            if (best < 0 || sign * resp[s] > sign * resp[best]) best = s;
        }
        if (best < 0)
            throw ProbeSelectionError("swap probes: no contiguous 3-cell path from state " +
                                      std::to_string(seed));
        path[k] = best;
        used[best] = true;
    }
    return path;
}

int action_between(const GridEnv& env, int from_state, int to_state) {
    auto [fx, fy] = env.state_coords(from_state);
    auto [tx, ty] = env.state_coords(to_state);
    if (tx == fx + 1 && ty == fy) return kRight;
    if (tx == fx - 1 && ty == fy) return kLeft;
    if (ty == fy + 1 && tx == fx) return kUp;
    if (ty == fy - 1 && tx == fx) return kDown;
    return kRight;  // the fabricated swap link has no real action
}

}  // namespace

SwapProtocol build_swap_exposure(const AgentBundle<float>& bundle, const GridEnv& env, int unit) {
    const auto resp = unit_state_responses(bundle, env, unit);
    const auto [mn, mx] = std::minmax_element(resp.begin(), resp.end());
    if (*mx - *mn < 1e-6f)
        throw ProbeSelectionError("swap probes: unit " + std::to_string(unit) +
                                  " has uniform spatial tuning");

    SwapProtocol proto;
    proto.unit = unit;
    std::vector<bool> banned(resp.size(), false);
    const auto p = greedy_path(env, resp, +1, banned);
    for (int s : p) banned[s] = true;
    const auto n = greedy_path(env, resp, -1, banned);
    proto.p_states = p;
    proto.n_states = n;

    // chain P1->P2->P3 -> N3->N2->N1; five transitions, reward never delivered
    const std::array<int, 6> seq{p[0], p[1], p[2], n[2], n[1], n[0]};
    std::array<int, 5> act{};
    for (int i = 0; i < 5; ++i) act[i] = action_between(env, seq[i], seq[i + 1]);
    for (int i = 0; i < 5; ++i) {
        Transition t;
        t.obs = env.render_state(seq[i]);
        t.obs_next = env.render_state(seq[i + 1]);
        t.action = act[i];
        t.action_next = i + 1 < 5 ? act[i + 1] : 0;
        t.reward = 0.0f;
        t.terminal = false;
        proto.chain.push_back(std::move(t));
    }
    return proto;
}

}  // namespace pxrl
