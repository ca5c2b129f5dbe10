#include "pxrl/training.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_map>

namespace pxrl {

namespace {

std::string obs_bytes(const std::vector<float>& v) {
    return std::string(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
}

// Batch-level deduplication: tabular tasks repeat observations constantly, so
// encode each distinct image once and gather rows into batch order.
struct DedupedObs {
    std::vector<const std::vector<float>*> unique_obs;
    std::vector<int> index_of;  // per requested row

    void add(const std::vector<float>& obs, std::unordered_map<std::string, int>& seen) {
        auto key = obs_bytes(obs);
        auto it = seen.find(key);
        if (it == seen.end()) {
            it = seen.emplace(std::move(key), static_cast<int>(unique_obs.size())).first;
            unique_obs.push_back(&obs);
        }
        index_of.push_back(it->second);
    }
};

TensorPtr<float> pack_obs(const std::vector<const std::vector<float>*>& obs, const Shape& obs_shape) {
    Shape shape{static_cast<int>(obs.size())};
    shape.insert(shape.end(), obs_shape.begin(), obs_shape.end());
    auto t = make_tensor<float>(shape);
    const size_t stride = obs.empty() ? 0 : obs[0]->size();
    for (size_t i = 0; i < obs.size(); ++i)
        std::memcpy(t->values.data() + i * stride, obs[i]->data(), stride * sizeof(float));
    return t;
}

std::vector<TensorPtr<float>> updatable_params(const AgentBundle<float>& bundle, bool freeze_repr) {
    std::vector<TensorPtr<float>> out;
    for (auto& [name, p] : online_params(bundle)) {
        const bool repr = name.rfind("enc/", 0) == 0 || name.rfind("t/", 0) == 0;
        if (freeze_repr && repr) continue;
        out.push_back(p);
    }
    return out;
}

std::vector<TensorPtr<float>> frozen_params(const AgentBundle<float>& bundle, bool freeze_repr) {
    std::vector<TensorPtr<float>> out;
    if (!freeze_repr) return out;
    for (auto& [name, p] : online_params(bundle)) {
        const bool repr = name.rfind("enc/", 0) == 0 || name.rfind("t/", 0) == 0;
        if (repr) out.push_back(p);
    }
    return out;
}

}  // namespace

LossReport train_step(AgentBundle<float>& bundle, ReplayBuffer& buffer, const TrainConfig& cfg,
                      TrainState& state, Rng& buffer_rng) {
    const int B = cfg.batch_size;
    if (buffer.empty()) throw ContractError("train_step: not ready, replay buffer is empty");
    const bool use_pos = bundle.weights.pos > 0.0;
    const bool use_neg = bundle.weights.neg > 0.0;
    const bool recurrent = bundle.spec.recurrent;

    BatchRef batch;
    batch.items.reserve(B);
    for (int b = 0; b < B; ++b) batch.items.push_back(&buffer.at(buffer.sample_index(buffer_rng)));

    std::vector<const Transition*> neg_i, neg_j;
    if (use_neg) {
        neg_i.reserve(B);
        neg_j.reserve(B);
        for (int b = 0; b < B; ++b) neg_i.push_back(&buffer.at(buffer.sample_index(buffer_rng)));
        for (int b = 0; b < B; ++b) neg_j.push_back(&buffer.at(buffer.sample_index(buffer_rng)));
    }

    const int dz = bundle.spec.latent;
    Tape<float> tape;
    TensorPtr<float> z_t, z_t1, z_i, z_j;
    TensorPtr<float> obs_t1_packed;

    if (!recurrent) {
        std::unordered_map<std::string, int> seen;
        DedupedObs dd;
        for (auto* tr : batch.items) dd.add(tr->obs, seen);
        for (auto* tr : batch.items) dd.add(tr->obs_next, seen);
        for (auto* tr : neg_i) dd.add(tr->obs, seen);
        for (auto* tr : neg_j) dd.add(tr->obs, seen);

        auto packed = pack_obs(dd.unique_obs, {bundle.spec.in_channels, bundle.spec.in_h, bundle.spec.in_w});
        auto z_all = encode(tape, bundle.enc, bundle.spec, packed);
        auto it = dd.index_of.begin();
        std::vector<int> idx_t(it, it + B);
        it += B;
        std::vector<int> idx_t1(it, it + B);
        it += B;
        z_t = gather_rows(tape, z_all, idx_t);
        z_t1 = gather_rows(tape, z_all, idx_t1);
        if (use_neg) {
            std::vector<int> idx_i(it, it + B);
            it += B;
            std::vector<int> idx_j(it, it + B);
            z_i = gather_rows(tape, z_all, idx_i);
            z_j = gather_rows(tape, z_all, idx_j);
        }
        std::vector<const std::vector<float>*> obs_next_ptrs;
        for (auto* tr : batch.items) obs_next_ptrs.push_back(&tr->obs_next);
        obs_t1_packed = pack_obs(obs_next_ptrs, {bundle.spec.in_channels, bundle.spec.in_h, bundle.spec.in_w});
    } else {
        // recurrent replay: stored recurrent state enters as a constant; the
        // next latent chains through the freshly computed z_t values
        std::vector<const std::vector<float>*> obs_ptrs, obs_next_ptrs;
        auto z_prev = make_tensor<float>({B, dz});
        for (int b = 0; b < B; ++b) {
            const auto* tr = batch.items[b];
            obs_ptrs.push_back(&tr->obs);
            obs_next_ptrs.push_back(&tr->obs_next);
            if (static_cast<int>(tr->z_prev.size()) != dz)
                throw ContractError("train_step: recurrent run needs z_prev stored in transitions");
            std::copy(tr->z_prev.begin(), tr->z_prev.end(),
                      z_prev->values.begin() + static_cast<long>(b) * dz);
        }
        const Shape os{bundle.spec.in_channels, bundle.spec.in_h, bundle.spec.in_w};
        auto packed_t = pack_obs(obs_ptrs, os);
        obs_t1_packed = pack_obs(obs_next_ptrs, os);
        z_t = recurrent_encode(tape, bundle.enc, bundle.spec, packed_t, z_prev);
        z_t1 = recurrent_encode(tape, bundle.enc, bundle.spec, obs_t1_packed, constant_like(z_t));
        if (use_neg) {
            std::vector<const std::vector<float>*> pi, pj;
            auto zp_i = make_tensor<float>({B, dz});
            auto zp_j = make_tensor<float>({B, dz});
            for (int b = 0; b < B; ++b) {
                pi.push_back(&neg_i[b]->obs);
                pj.push_back(&neg_j[b]->obs);
                std::copy(neg_i[b]->z_prev.begin(), neg_i[b]->z_prev.end(),
                          zp_i->values.begin() + static_cast<long>(b) * dz);
                std::copy(neg_j[b]->z_prev.begin(), neg_j[b]->z_prev.end(),
                          zp_j->values.begin() + static_cast<long>(b) * dz);
            }
            z_i = recurrent_encode(tape, bundle.enc, bundle.spec, pack_obs(pi, os), zp_i);
            z_j = recurrent_encode(tape, bundle.enc, bundle.spec, pack_obs(pj, os), zp_j);
        }
    }

    LossReport report;
    TensorPtr<float> lq, lp, ln;
    const bool use_q = bundle.weights.q > 0.0;
    if (!use_q && !use_pos && !use_neg)
        throw ContractError("train_step: all loss weights are zero");

    // L_Q
    if (use_q) {
        std::vector<float> y;
        if (!recurrent) {
            y = double_q_targets(bundle, batch, z_t1->values, obs_t1_packed);
        } else {
            // targets under the target Q head on the online recurrent latents
            Tape<float> scratch(false);
            auto z1 = make_tensor<float>({B, dz}, z_t1->values);
            const auto q_on = q_all_actions(scratch, bundle.q, z1, bundle.num_actions);
            std::vector<int> best(B);
            for (int b = 0; b < B; ++b)
                best[b] = argmax_row(q_on.data() + static_cast<size_t>(b) * bundle.num_actions,
                                     bundle.num_actions);
            auto q_tg = q_value(scratch, bundle.target_q, z1, best, bundle.num_actions);
            y.resize(B);
            for (int b = 0; b < B; ++b) {
                y[b] = batch.items[b]->reward;
                if (!batch.items[b]->terminal) y[b] += bundle.gamma_q * q_tg->values[b];
            }
        }
        std::vector<int> a_t(B);
        for (int b = 0; b < B; ++b) a_t[b] = batch.items[b]->action;
        auto q_pred = q_value(tape, bundle.q, z_t, a_t, bundle.num_actions);
        lq = loss_q(tape, q_pred, make_tensor<float>({B}, std::move(y)));
        report.q = lq->values[0];
    }

    // L_+
    if (use_pos) {
        std::vector<int> a_t(B), a_t1(B);
        for (int b = 0; b < B; ++b) {
            a_t[b] = batch.items[b]->action;
            a_t1[b] = batch.items[b]->action_next;
        }
        auto tau_t = tau(tape, bundle.t, z_t, a_t, bundle.num_actions);
        auto boot = positive_bootstrap(bundle, batch, z_t1->values);
        lp = loss_positive(tape, tau_t, z_t1, boot);
        report.pos = lp->values[0];
    }

    // L_-
    if (use_neg) {
        ln = loss_negative(tape, z_i, z_j);
        report.neg = ln->values[0];
    }

    report.total = static_cast<float>(bundle.weights.q) * report.q +
                   static_cast<float>(bundle.weights.pos) * report.pos +
                   static_cast<float>(bundle.weights.neg) * report.neg;
    if (!report.finite())
        throw NumericError("train_step: non-finite loss at step " + std::to_string(state.step) +
                           " (q=" + std::to_string(report.q) + " pos=" + std::to_string(report.pos) +
                           " neg=" + std::to_string(report.neg) + ")");

    const auto params = updatable_params(bundle, cfg.freeze_repr);
    const auto all_online = updatable_params(bundle, false);

    if (cfg.optimizer == OptimizerKind::kSgd) {
        // one step on the weighted sum
        TensorPtr<float> total;
        auto accumulate = [&](const TensorPtr<float>& loss, double w) {
            if (!loss || w <= 0.0) return;
            auto term = scale(tape, loss, static_cast<float>(w));
            total = total ? add(tape, total, term) : term;
        };
        accumulate(lq, bundle.weights.q);
        accumulate(lp, bundle.weights.pos);
        accumulate(ln, bundle.weights.neg);
        tape.backward(total);
        sgd_step(params, static_cast<float>(cfg.base_lr));
    } else {
        // one normalized optimizer per loss, each at rate base_lr * weight;
        // gradients are snapshotted per loss before any update is applied
        auto ensure = [&](std::shared_ptr<AdamOptimizer<float>>& slot, double w) {
            if (!slot)
                slot = std::make_shared<AdamOptimizer<float>>(static_cast<float>(cfg.base_lr * w));
        };
        struct PendingStep {
            AdamOptimizer<float>* opt;
            std::vector<std::vector<float>> grads;
        };
        std::vector<PendingStep> pending;
        auto backprop = [&](const TensorPtr<float>& loss, AdamOptimizer<float>* opt) {
            zero_grads(all_online);
            tape.zero_output_grads();
            tape.backward(loss);
            PendingStep ps;
            ps.opt = opt;
            ps.grads.reserve(params.size());
            for (const auto& p : params) ps.grads.push_back(p->grad);
            pending.push_back(std::move(ps));
        };
        if (lq && bundle.weights.q > 0.0) {
            ensure(state.adam_q, bundle.weights.q);
            backprop(lq, state.adam_q.get());
        }
        if (lp && bundle.weights.pos > 0.0) {
            ensure(state.adam_pos, bundle.weights.pos);
            backprop(lp, state.adam_pos.get());
        }
        if (ln && bundle.weights.neg > 0.0) {
            ensure(state.adam_neg, bundle.weights.neg);
            backprop(ln, state.adam_neg.get());
        }
        for (auto& ps : pending) {
            std::vector<const float*> gp;
            gp.reserve(ps.grads.size());
            for (const auto& g : ps.grads) gp.push_back(g.data());
            ps.opt->step_with(params, gp);
        }
    }
    zero_grads(all_online);

    ++state.step;
    if (cfg.target_sync_period > 0 && state.step % cfg.target_sync_period == 0) sync_target(bundle);
    return report;
}

// ---------------------------------------------------------------- policy --

int greedy_action(const AgentBundle<float>& bundle, const std::vector<float>& obs,
                  const std::vector<float>* z_prev, std::vector<float>* z_out) {
    Tape<float> tape(false);
    auto o = make_tensor<float>({bundle.spec.in_channels, bundle.spec.in_h, bundle.spec.in_w},
                                obs);
    TensorPtr<float> z;
    if (bundle.spec.recurrent) {
        if (!z_prev) throw ContractError("greedy_action: recurrent bundle needs z_prev");
        auto zp = make_tensor<float>({bundle.spec.latent}, *z_prev);
        z = recurrent_encode(tape, bundle.enc, bundle.spec, o, zp);
    } else {
        z = encode(tape, bundle.enc, bundle.spec, o);
    }
    if (z_out) *z_out = z->values;
    auto z2 = reshape(tape, z, {1, bundle.spec.latent});
    const auto q = q_all_actions(tape, bundle.q, z2, bundle.num_actions);
    return argmax_row(q.data(), bundle.num_actions);
}

Collector::Collector(Env& env, PolicySpec policy, Rng policy_rng, int episode_cap)
    : env_(env), policy_(policy), rng_(policy_rng), episode_cap_(episode_cap) {}

int Collector::choose_action(const AgentBundle<float>& bundle, const std::vector<float>& obs) {
    const bool explore = policy_.kind == PolicyKind::kRandom || rng_.bernoulli(policy_.epsilon);
    if (bundle.spec.recurrent) {
        // the recurrent state must advance every step regardless of policy
        std::vector<float> z;
        const int greedy = greedy_action(bundle, obs, &z_prev_, &z);
        z_cur_ = std::move(z);
        return explore ? rng_.uniform_int(env_.num_actions()) : greedy;
    }
    if (explore) return rng_.uniform_int(env_.num_actions());
    return greedy_action(bundle, obs);
}

void Collector::collect(const AgentBundle<float>& bundle, ReplayBuffer& buffer, int n_steps) {
    for (int i = 0; i < n_steps; ++i) {
        if (need_reset_) {
            obs_ = env_.reset();
            z_prev_.assign(bundle.spec.latent, 0.0f);
            steps_in_episode_ = 0;
            need_reset_ = false;
            ++episodes_;
        }
        const int a = choose_action(bundle, obs_);
        if (have_pending_) {
            pending_.action_next = a;
            buffer.push(std::move(pending_));
            have_pending_ = false;
        }
        StepResult sr = env_.step(a);
        Transition t;
        t.obs = obs_;
        t.action = a;
        t.reward = sr.reward;
        t.obs_next = sr.obs;
        t.terminal = sr.terminal;
        if (bundle.spec.recurrent) t.z_prev = z_prev_;
        obs_ = std::move(sr.obs);
        if (bundle.spec.recurrent) z_prev_ = z_cur_;
        ++steps_in_episode_;

        if (sr.terminal) {
            t.action_next = 0;
            buffer.push(std::move(t));
            need_reset_ = true;
        } else if (steps_in_episode_ >= episode_cap_) {
            // truncation: complete with the action the policy would take next
            t.action_next = choose_action(bundle, obs_);
            buffer.push(std::move(t));
            need_reset_ = true;
        } else {
            pending_ = std::move(t);
            have_pending_ = true;
        }
    }
}

double evaluate_policy(Env& env, const AgentBundle<float>& bundle, int n_episodes, int step_cap) {
    int successes = 0;
    // parameters are fixed across one evaluation; feedforward bundles repeat
    // the same few observations constantly, so memoize the greedy choice
    std::unordered_map<std::string, int> action_cache;
    for (int ep = 0; ep < n_episodes; ++ep) {
        auto obs = env.reset();
        std::vector<float> z_prev(bundle.spec.latent, 0.0f);
        for (int s = 0; s < step_cap; ++s) {
            int a;
            if (bundle.spec.recurrent) {
                std::vector<float> z;
                a = greedy_action(bundle, obs, &z_prev, &z);
                z_prev = std::move(z);
            } else {
                const std::string key = obs_bytes(obs);
                auto it = action_cache.find(key);
                if (it == action_cache.end())
                    it = action_cache.emplace(key, greedy_action(bundle, obs)).first;
                a = it->second;
            }
            StepResult sr = env.step(a);
            obs = std::move(sr.obs);
            if (sr.terminal) {
                if (sr.reward > 0.0f) ++successes;
                break;
            }
        }
    }
    return static_cast<double>(successes) / n_episodes;
}

// ---------------------------------------------------------- weight grids --

Family family_from_name(const std::string& s) {
    if (s == "mf") return Family::kMfOnly;
    if (s == "neg") return Family::kNegOnly;
    if (s == "pred") return Family::kPred;
    throw ConfigError("unknown model family '" + s + "' (expected mf|neg|pred)");
}

const char* family_name(Family f) {
    switch (f) {
        case Family::kMfOnly: return "mf";
        case Family::kNegOnly: return "neg";
        case Family::kPred: return "pred";
    }
    return "mf";
}

LossWeights published_weights(Family family, double gamma_pred) {
    switch (family) {
        case Family::kMfOnly: return {1e-4, 0.0, 0.0};
        case Family::kNegOnly: return {1e-4, 1e-4, 0.0};
        case Family::kPred: break;
    }
    if (gamma_pred == 0.0) return {1e-4, 1e-5, 1e-6};
    if (gamma_pred == 0.25) return {1e-4, 1e-4, 1e-6};
    if (gamma_pred == 0.5) return {1e-4, 1e-4, 1e-7};
    if (gamma_pred == 0.8) return {1e-4, 1e-4, 1e-8};
    return {1e-4, 1e-5, 1e-6};  // off-grid horizons fall back to the short-horizon row
}

LossWeights default_weights(Family family, double gamma_pred) {
    switch (family) {
        case Family::kMfOnly: return {1e-4, 0.0, 0.0};
        case Family::kNegOnly: return {1e-4, 1e-6, 0.0};
        case Family::kPred: break;
    }
    if (gamma_pred == 0.0) return {1e-4, 1e-6, 1e-6};
    if (gamma_pred == 0.25) return {1e-4, 1e-5, 1e-7};
    if (gamma_pred == 0.5) return {1e-4, 1e-6, 1e-7};
    if (gamma_pred == 0.8) return {1e-4, 1e-6, 1e-7};
    return {1e-4, 1e-6, 1e-6};
}

std::vector<LossWeights> search_candidates(Family family, double gamma_pred) {
    std::vector<LossWeights> out;
    switch (family) {
        case Family::kMfOnly:
            for (double q : {1e-5, 1e-4, 1e-3}) out.push_back({q, 0.0, 0.0});
            return out;
        case Family::kNegOnly:
            for (double n : {1e-6, 1e-5, 1e-4, 1e-3, 1e-2}) out.push_back({1e-4, n, 0.0});
            return out;
        case Family::kPred:
            break;
    }
    if (gamma_pred == 0.0) {
        for (double n : {1e-6, 1e-5, 1e-4, 1e-3}) out.push_back({1e-4, n, 1e-6});
    } else if (gamma_pred == 0.25 || gamma_pred == 0.5) {
        for (double p : {1e-6, 1e-7})
            for (double n : {1e-6, 1e-5, 1e-4, 1e-3}) out.push_back({1e-4, n, p});
    } else {
        for (double p : {1e-7, 1e-8})
            for (double n : {1e-6, 1e-5, 1e-4, 1e-3}) out.push_back({1e-4, n, p});
    }
    return out;
}

LossWeights grid_search_weights(const std::vector<LossWeights>& candidates,
                                const std::vector<uint64_t>& seeds,
                                const std::function<double(const LossWeights&, uint64_t)>& final_score) {
    if (candidates.empty()) throw ContractError("grid_search_weights: empty candidate list");
    LossWeights best = candidates[0];
    double best_score = -1.0;
    bool first = true;
    for (const auto& w : candidates) {
        double mean = 0.0;
        for (uint64_t s : seeds) mean += final_score(w, s);
        mean /= static_cast<double>(seeds.size());
        const bool better =
            first || mean > best_score ||
            (mean == best_score && (w.pos < best.pos || (w.pos == best.pos && w.neg < best.neg)));
        if (better) {
            best = w;
            best_score = mean;
            first = false;
        }
    }
    return best;
}

}  // namespace pxrl
