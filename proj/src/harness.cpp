#include "pxrl/harness.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pxrl/checkpoint.hpp"
#include "pxrl/svg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pxrl {

namespace {

std::string fmt_g(double v, int prec = 12) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    return buf;
}

std::string fmt_f(float v) { return fmt_g(static_cast<double>(v), 9); }

void check_keys(const json& j, const std::string& ctx, const std::vector<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError("config: '" + ctx + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw ConfigError("config: unknown key '" + it.key() + "' in " + ctx);
    }
}

const std::vector<std::string> kExperiments = {"foraging",  "goal-transfer", "shuffle-transfer",
                                               "circular",  "alt-t",         "alt-t-po",
                                               "corridor",  "swap"};

}  // namespace

int RunConfig::total_steps() const {
    if (experiment == "goal-transfer" || experiment == "shuffle-transfer")
        return steps + transfer_steps;
    return steps;
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: JSON parse error: ") + e.what());
    }
    check_keys(j, "top level",
               {"experiment", "seed", "seeds", "model", "env", "train", "transfer", "swap", "out"});
    RunConfig c;
    c.experiment = j.value("experiment", c.experiment);
    if (std::find(kExperiments.begin(), kExperiments.end(), c.experiment) == kExperiments.end())
        throw ConfigError("config: unknown experiment '" + c.experiment + "'");
    c.seed = j.value("seed", c.seed);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    if (c.seeds.empty()) c.seeds = {c.seed};
    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m, "model", {"family", "gamma_pred", "variant", "latent", "gamma_q", "weights"});
        c.family = m.value("family", c.family);
        family_from_name(c.family);  // validates
        c.gamma_pred = m.value("gamma_pred", c.gamma_pred);
        if (c.gamma_pred < 0.0 || c.gamma_pred >= 1.0)
            throw ConfigError("config: gamma_pred must lie in [0,1)");
        c.variant = m.value("variant", c.variant);
        variant_from_name(c.variant);
        c.latent = m.value("latent", c.latent);
        if (c.latent < 1) throw ConfigError("config: latent must be positive");
        c.gamma_q = m.value("gamma_q", c.gamma_q);
        if (m.contains("weights")) {
            auto w = m.at("weights").get<std::vector<double>>();
            if (w.size() != 3) throw ConfigError("config: weights must be [w_q, w_neg, w_pos]");
            if (w[0] < 0 || w[1] < 0 || w[2] < 0) throw ConfigError("config: weights must be >= 0");
            c.weights = LossWeights{w[0], w[1], w[2]};
        }
    }
    if (j.contains("env")) {
        const auto& e = j.at("env");
        check_keys(e, "env", {"mode", "side", "stochastic_p", "goal", "image_bank", "image_size"});
        c.env_mode = e.value("mode", c.env_mode);
        if (c.env_mode != "plain" && c.env_mode != "shuffled" && c.env_mode != "image-bank")
            throw ConfigError("config: env mode must be plain|shuffled|image-bank");
        c.side = e.value("side", c.side);
        c.stochastic_p = e.value("stochastic_p", c.stochastic_p);
        if (c.stochastic_p < 0.0 || c.stochastic_p > 1.0)
            throw ConfigError("config: stochastic_p must lie in [0,1]");
        if (e.contains("goal")) {
            auto g = e.at("goal").get<std::vector<int>>();
            if (g.size() != 2) throw ConfigError("config: env goal must be [x,y]");
            c.goal_x = g[0];
            c.goal_y = g[1];
        }
        c.image_bank_index = e.value("image_bank", c.image_bank_index);
        if (e.contains("image_size")) {
            auto s = e.at("image_size").get<std::vector<int>>();
            if (s.size() != 2) throw ConfigError("config: image_size must be [w,h]");
            c.image_w = s[0];
            c.image_h = s[1];
        }
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        check_keys(t, "train",
                   {"steps", "optimizer", "base_lr", "batch", "sync_period", "collect_per_step",
                    "buffer_capacity", "prefill", "episode_cap", "policy", "epsilon", "eval_every",
                    "eval_episodes", "checkpoint_steps"});
        c.steps = t.value("steps", c.steps);
        c.optimizer = t.value("optimizer", c.optimizer);
        if (c.optimizer != "adam" && c.optimizer != "sgd")
            throw ConfigError("config: optimizer must be adam|sgd");
        c.base_lr = t.value("base_lr", c.base_lr);
        c.batch = t.value("batch", c.batch);
        if (c.batch < 1) throw ConfigError("config: batch must be >= 1");
        c.sync_period = t.value("sync_period", c.sync_period);
        c.collect_per_step = t.value("collect_per_step", c.collect_per_step);
        c.buffer_capacity = t.value("buffer_capacity", c.buffer_capacity);
        c.prefill = t.value("prefill", c.prefill);
        c.episode_cap = t.value("episode_cap", c.episode_cap);
        c.policy = t.value("policy", c.policy);
        if (c.policy != "random" && c.policy != "egreedy")
            throw ConfigError("config: policy must be random|egreedy");
        c.epsilon = t.value("epsilon", c.epsilon);
        c.eval_every = t.value("eval_every", c.eval_every);
        c.eval_episodes = t.value("eval_episodes", c.eval_episodes);
        if (t.contains("checkpoint_steps"))
            c.checkpoint_steps = t.at("checkpoint_steps").get<std::vector<int>>();
    }
    if (j.contains("transfer")) {
        const auto& t = j.at("transfer");
        check_keys(t, "transfer", {"steps", "goal_b"});
        c.transfer_steps = t.value("steps", c.transfer_steps);
        if (t.contains("goal_b")) {
            auto g = t.at("goal_b").get<std::vector<int>>();
            if (g.size() != 2) throw ConfigError("config: transfer goal_b must be [x,y]");
            c.goal_b_x = g[0];
            c.goal_b_y = g[1];
        }
    }
    if (j.contains("swap")) {
        const auto& s = j.at("swap");
        check_keys(s, "swap", {"exposure_steps"});
        c.exposure_steps = s.value("exposure_steps", c.exposure_steps);
    }
    c.out_dir = j.value("out", c.out_dir);
    return c;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config file not readable: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string RunConfig::to_json_text() const {
    json j;
    j["experiment"] = experiment;
    j["seed"] = seed;
    if (seeds.size() > 1 || (seeds.size() == 1 && seeds[0] != seed)) j["seeds"] = seeds;
    json m;
    m["family"] = family;
    m["gamma_pred"] = gamma_pred;
    m["variant"] = variant;
    m["latent"] = latent;
    m["gamma_q"] = gamma_q;
    if (weights) m["weights"] = {weights->q, weights->neg, weights->pos};
    j["model"] = m;
    json e;
    e["mode"] = env_mode;
    e["side"] = side;
    e["stochastic_p"] = stochastic_p;
    e["goal"] = {goal_x, goal_y};
    if (!image_bank_index.empty()) {
        e["image_bank"] = image_bank_index;
        e["image_size"] = {image_w, image_h};
    }
    j["env"] = e;
    json t;
    t["steps"] = steps;
    t["optimizer"] = optimizer;
    t["base_lr"] = base_lr;
    t["batch"] = batch;
    t["sync_period"] = sync_period;
    t["collect_per_step"] = collect_per_step;
    t["buffer_capacity"] = buffer_capacity;
    t["prefill"] = prefill;
    t["episode_cap"] = episode_cap;
    t["policy"] = policy;
    t["epsilon"] = epsilon;
    t["eval_every"] = eval_every;
    t["eval_episodes"] = eval_episodes;
    if (!checkpoint_steps.empty()) t["checkpoint_steps"] = checkpoint_steps;
    j["train"] = t;
    if (experiment == "goal-transfer" || experiment == "shuffle-transfer")
        j["transfer"] = {{"steps", transfer_steps}, {"goal_b", {goal_b_x, goal_b_y}}};
    if (experiment == "swap") j["swap"] = {{"exposure_steps", exposure_steps}};
    if (!out_dir.empty()) j["out"] = out_dir;
    return j.dump(2) + "\n";
}

// --- environment / bundle construction ----------------------------------------

std::unique_ptr<Env> make_run_env(const RunConfig& cfg) {
    const uint64_t env_seed = derive_seed(cfg.seed, "env");
    if (cfg.experiment == "circular") return std::make_unique<CircularTrackEnv>(env_seed);
    if (cfg.experiment == "alt-t") return std::make_unique<AltTMazeEnv>(env_seed, true);
    if (cfg.experiment == "alt-t-po") return std::make_unique<AltTMazeEnv>(env_seed, false);
    if (cfg.experiment == "corridor") return std::make_unique<CorridorEnv>(env_seed);
    GridEnv::Config gc;
    gc.width = cfg.side;
    gc.height = cfg.side;
    gc.goal_x = cfg.goal_x;
    gc.goal_y = cfg.goal_y;
    gc.stochastic_p = cfg.stochastic_p;
    gc.seed = env_seed;
    if (cfg.env_mode == "plain") gc.mode = ObsMode::kPlain;
    else if (cfg.env_mode == "shuffled") gc.mode = ObsMode::kShuffled;
    else {
        gc.mode = ObsMode::kImageBank;
        gc.bank = std::make_shared<ImageBank>(
            ImageBank::load(cfg.image_bank_index, cfg.side, cfg.side, cfg.image_w, cfg.image_h));
    }
    return std::make_unique<GridEnv>(std::move(gc));
}

namespace {

AgentBundle<float> make_run_bundle(const RunConfig& cfg, const Env& env) {
    EncoderSpec spec;
    spec.variant = variant_from_name(cfg.variant);
    spec.latent = cfg.latent;
    const auto os = env.obs_shape();
    spec.in_channels = os[0];
    spec.in_h = os[1];
    spec.in_w = os[2];
    spec.recurrent = cfg.experiment == "alt-t-po";
    const LossWeights w =
        cfg.weights ? *cfg.weights : default_weights(family_from_name(cfg.family), cfg.gamma_pred);
    return make_bundle<float>(spec, env.num_actions(), static_cast<float>(cfg.gamma_pred),
                              static_cast<float>(cfg.gamma_q), w, derive_seed(cfg.seed, "init"));
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << text;
}

void write_manifest(const std::string& dir, const RunConfig& cfg, const AgentBundle<float>& b) {
    json m;
    m["variant"] = variant_name(b.spec.variant);
    m["latent"] = b.spec.latent;
    m["gamma_pred"] = b.gamma_pred;
    m["gamma_q"] = b.gamma_q;
    m["weights"] = {b.weights.q, b.weights.neg, b.weights.pos};
    m["seed"] = cfg.seed;
    m["family"] = cfg.family;
    m["num_actions"] = b.num_actions;
    m["obs_shape"] = {b.spec.in_channels, b.spec.in_h, b.spec.in_w};
    m["recurrent"] = b.spec.recurrent;
    write_text(dir + "/manifest.json", m.dump(2) + "\n");
}

std::string ckpt_path(const std::string& dir, int step) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ckpt_%06d.pxrl", step);
    return dir + "/" + buf;
}

std::string dump_path(const std::string& dir, const std::string& probe, const std::string& step) {
    return dir + "/dump_" + probe + "_" + step + ".pxad";
}

// --- probes --------------------------------------------------------------------

std::vector<float> encode_states_flat(const AgentBundle<float>& bundle, const Env& env) {
    const int S = env.num_states();
    Shape os{bundle.spec.in_channels, bundle.spec.in_h, bundle.spec.in_w};
    auto packed = make_tensor<float>({S, os[0], os[1], os[2]});
    const size_t stride = static_cast<size_t>(numel_of(os));
    for (int s = 0; s < S; ++s) {
        auto img = env.render_state(s);
        std::memcpy(packed->values.data() + s * stride, img.data(), stride * sizeof(float));
    }
    Tape<float> tape(false);
    auto z = encode(tape, bundle.enc, bundle.spec, packed);
    return z->values;  // [S, dz]
}

void fill_state_coords(ActivationDump& d, const Env& env) {
    d.state_x.resize(d.states);
    d.state_y.resize(d.states);
    for (int s = 0; s < d.states; ++s) {
        auto [x, y] = env.state_coords(s);
        d.state_x[s] = x;
        d.state_y[s] = y;
    }
}

ActivationDump probe_z_sweep(const AgentBundle<float>& bundle, const Env& env) {
    if (bundle.spec.recurrent)
        throw ConfigError("probe z-sweep: recurrent encoders need the t-conditions/z-conditions probes");
    ActivationDump d;
    d.layer = "z";
    d.units = bundle.spec.latent;
    d.states = env.num_states();
    d.conds = 1;
    const auto z = encode_states_flat(bundle, env);  // [S, dz]
    d.values.assign(static_cast<size_t>(d.units) * d.states, 0.0f);
    for (int s = 0; s < d.states; ++s)
        for (int u = 0; u < d.units; ++u)
            d.values[static_cast<size_t>(u) * d.states + s] = z[static_cast<size_t>(s) * d.units + u];
    d.visits.assign(d.states, 1.0f);
    fill_state_coords(d, env);
    if (auto* ring = dynamic_cast<const CircularTrackEnv*>(&env)) d.reward_state = ring->reward_state();
    return d;
}

// Uniform-random evaluation rollout; records z or T(z, a_taken) per state.
ActivationDump probe_rollout(const AgentBundle<float>& bundle, const Env& env_proto,
                             const std::string& layer, uint64_t master_seed, int steps = 5000) {
    if (bundle.spec.recurrent) throw ConfigError("probe " + layer + "-rollout: recurrent encoders unsupported");
    auto env = env_proto.clone();
    env->reseed(derive_seed(master_seed, "probe-env"));
    Rng policy(derive_seed(master_seed, "probe-policy"));

    ActivationDump d;
    d.layer = layer;
    d.units = bundle.spec.latent;
    d.states = env->num_states();
    d.conds = 1;
    d.values.assign(static_cast<size_t>(d.units) * d.states, 0.0f);
    d.visits.assign(d.states, 0.0f);
    fill_state_coords(d, *env);
    if (auto* ring = dynamic_cast<const CircularTrackEnv*>(env.get())) d.reward_state = ring->reward_state();

    bool need_reset = true;
    std::vector<float> obs;
    for (int t = 0; t < steps; ++t) {
        if (need_reset) {
            obs = env->reset();
            need_reset = false;
        }
        const int s = env->state_index();
        const int a = policy.uniform_int(env->num_actions());
        Tape<float> tape(false);
        auto o = make_tensor<float>({bundle.spec.in_channels, bundle.spec.in_h, bundle.spec.in_w}, obs);
        auto z = encode(tape, bundle.enc, bundle.spec, o);
        const float* rec = z->values.data();
        TensorPtr<float> tout;
        if (layer == "t") {
            auto z2 = reshape(tape, z, {1, bundle.spec.latent});
            tout = predict_delta(tape, bundle.t, z2, {a}, bundle.num_actions);
            rec = tout->values.data();
        }
        for (int u = 0; u < d.units; ++u)
            d.values[static_cast<size_t>(u) * d.states + s] += rec[u];
        d.visits[s] += 1.0f;
        StepResult sr = env->step(a);
        obs = std::move(sr.obs);
        if (sr.terminal) need_reset = true;
    }
    for (int u = 0; u < d.units; ++u)
        for (int s = 0; s < d.states; ++s)
            if (d.visits[s] > 0)
                d.values[static_cast<size_t>(u) * d.states + s] /= d.visits[s];
    return d;
}

AgentBundle<float> shuffle_t_weights(const AgentBundle<float>& bundle, uint64_t master_seed) {
    AgentBundle<float> copy = bundle;  // shares tensors; rebuild the T head
    Rng rng(derive_seed(master_seed, "probe-shuffle"));
    MlpParams<float> t2;
    std::vector<float> pool;
    for (const auto& layer : bundle.t.layers) {
        for (float v : layer.weights->values) pool.push_back(v);
        for (float v : layer.bias->values) pool.push_back(v);
    }
    for (int i = static_cast<int>(pool.size()) - 1; i > 0; --i)
        std::swap(pool[i], pool[rng.uniform_int(i + 1)]);
    size_t k = 0;
    for (const auto& layer : bundle.t.layers) {
        DenseLayer<float> l2;
        l2.weights = make_tensor<float>(layer.weights->shape, true);
        l2.bias = make_tensor<float>(layer.bias->shape, true);
        for (auto& v : l2.weights->values) v = pool[k++];
        for (auto& v : l2.bias->values) v = pool[k++];
        t2.layers.push_back(std::move(l2));
    }
    copy.t = std::move(t2);
    return copy;
}

// Canonical figure-8 walks of both trial types; T (or z) population vectors
// recorded at the five center-corridor positions with the probe action fixed
// to Up for both conditions.
ActivationDump probe_conditions(const AgentBundle<float>& bundle, const Env& env_proto,
                                const std::string& layer) {
    const auto* maze_proto = dynamic_cast<const AltTMazeEnv*>(&env_proto);
    if (!maze_proto) throw ConfigError("probe " + layer + "-conditions: needs the alternating-T maze");
    ActivationDump d;
    d.layer = layer;
    d.units = bundle.spec.latent;
    d.states = 5;  // corridor positions y = 0..4
    d.conds = 2;   // left, right
    d.values.assign(static_cast<size_t>(d.units) * d.states * d.conds, 0.0f);
    d.visits.assign(static_cast<size_t>(d.states) * d.conds, 1.0f);
    d.state_x.assign(d.states, 2);
    d.state_y.resize(d.states);
    for (int s = 0; s < d.states; ++s) d.state_y[s] = s;

    for (int cond = 0; cond < 2; ++cond) {
        auto env = env_proto.clone();
        auto* maze = dynamic_cast<AltTMazeEnv*>(env.get());
        auto obs = maze->reset();
        if (maze->trial_type() != cond) obs = maze->reset();
        std::vector<float> z_prev(bundle.spec.latent, 0.0f);
        const auto path = AltTMazeEnv::canonical_trial_path(cond);
        for (const auto& [cell, action] : path) {
            Tape<float> tape(false);
            auto o = make_tensor<float>({1, AltTMazeEnv::kSide, AltTMazeEnv::kSide}, obs);
            TensorPtr<float> z;
            if (bundle.spec.recurrent) {
                auto zp = make_tensor<float>({bundle.spec.latent}, z_prev);
                z = recurrent_encode(tape, bundle.enc, bundle.spec, o, zp);
                z_prev = z->values;
            } else {
                z = encode(tape, bundle.enc, bundle.spec, o);
            }
            if (cell.first == 2) {
                const int pos = cell.second;
                const float* rec = z->values.data();
                TensorPtr<float> tout;
                if (layer == "t") {
                    auto z2 = reshape(tape, z, {1, bundle.spec.latent});
                    tout = predict_delta(tape, bundle.t, z2, {kUp}, bundle.num_actions);
                    rec = tout->values.data();
                }
                for (int u = 0; u < d.units; ++u)
                    d.values[(static_cast<size_t>(u) * d.states + pos) * 2 + cond] = rec[u];
            }
            StepResult sr = maze->step(action);
            obs = std::move(sr.obs);
        }
    }
    return d;
}

// Spatially pooled first-convolution responses to the two corridor gratings.
ActivationDump probe_conv1_stimuli(const AgentBundle<float>& bundle, const Env& env_proto) {
    const auto* corridor = dynamic_cast<const CorridorEnv*>(&env_proto);
    if (!corridor) throw ConfigError("probe conv1-stimuli: needs the corridor task");
    const EncoderShapes es = encoder_shapes(bundle.spec);
    ActivationDump d;
    d.layer = "conv1";
    d.units = es.c1;
    d.states = 1;
    d.conds = 2;  // vertical, angled
    d.values.assign(static_cast<size_t>(d.units) * 2, 0.0f);
    d.visits.assign(2, 1.0f);
    d.state_x = {0};
    d.state_y = {0};
    for (int cond = 0; cond < 2; ++cond) {
        auto img = env_proto.render_state(cond == 0 ? CorridorEnv::kStimVertical
                                                    : CorridorEnv::kStimAngled);
        Tape<float> tape(false);
        auto o = make_tensor<float>({1, CorridorEnv::kSide, CorridorEnv::kSide}, img);
        auto h = relu(tape, conv2d_valid(tape, o, bundle.enc.convs[0].kernels, bundle.enc.convs[0].bias));
        const int hw = es.h1 * es.w1;
        for (int u = 0; u < d.units; ++u) {
            float acc = 0.0f;
            for (int i = 0; i < hw; ++i) acc += h->values[static_cast<size_t>(u) * hw + i];
            d.values[static_cast<size_t>(u) * 2 + cond] = acc / hw;
        }
    }
    return d;
}

ActivationDump run_probe(const RunConfig& cfg, const AgentBundle<float>& bundle, const Env& env,
                         const std::string& probe) {
    if (probe == "z-sweep") return probe_z_sweep(bundle, env);
    if (probe == "z-rollout") return probe_rollout(bundle, env, "z", cfg.seed);
    if (probe == "t-rollout") return probe_rollout(bundle, env, "t", cfg.seed);
    if (probe == "t-rollout-shuffled")
        return probe_rollout(shuffle_t_weights(bundle, cfg.seed), env, "t", cfg.seed);
    if (probe == "t-conditions") return probe_conditions(bundle, env, "t");
    if (probe == "z-conditions") return probe_conditions(bundle, env, "z");
    if (probe == "conv1-stimuli") return probe_conv1_stimuli(bundle, env);
    std::string tags;
    for (const auto& t : probe_tags()) tags += (tags.empty() ? "" : ", ") + t;
    throw ConfigError("unknown probe '" + probe + "'; valid probes: " + tags);
}

}  // namespace

const std::vector<std::string>& probe_tags() {
    static const std::vector<std::string> tags = {"z-sweep",      "z-rollout",         "t-rollout",
                                                  "t-rollout-shuffled", "t-conditions", "z-conditions",
                                                  "conv1-stimuli"};
    return tags;
}

// --- dump files -------------------------------------------------------------------

void write_dump_file(const std::string& path, const ActivationDump& d) {
    std::vector<NamedTensor> ts;
    const float layer_code = d.layer == "z" ? 0.0f : d.layer == "t" ? 1.0f : 2.0f;
    ts.push_back({"meta", {5},
                  {static_cast<float>(d.units), static_cast<float>(d.states),
                   static_cast<float>(d.conds), static_cast<float>(d.reward_state), layer_code}});
    ts.push_back({"values", {d.units, d.states, d.conds}, d.values});
    ts.push_back({"visits", {d.states, d.conds}, d.visits});
    std::vector<float> sx(d.state_x.begin(), d.state_x.end());
    std::vector<float> sy(d.state_y.begin(), d.state_y.end());
    ts.push_back({"state_x", {d.states}, sx});
    ts.push_back({"state_y", {d.states}, sy});
    write_tensor_file(path, ts);
}

ActivationDump read_dump_file(const std::string& path) {
    auto ts = read_tensor_file(path);
    auto find = [&](const std::string& name) -> const NamedTensor& {
        for (const auto& t : ts)
            if (t.name == name) return t;
        throw IoError("dump " + path + " is missing tensor '" + name + "'");
    };
    const auto& meta = find("meta");
    ActivationDump d;
    d.units = static_cast<int>(meta.values[0]);
    d.states = static_cast<int>(meta.values[1]);
    d.conds = static_cast<int>(meta.values[2]);
    d.reward_state = static_cast<int>(meta.values[3]);
    d.layer = meta.values[4] == 0.0f ? "z" : meta.values[4] == 1.0f ? "t" : "conv1";
    d.values = find("values").values;
    d.visits = find("visits").values;
    for (float v : find("state_x").values) d.state_x.push_back(static_cast<int>(v));
    for (float v : find("state_y").values) d.state_y.push_back(static_cast<int>(v));
    return d;
}

ZSeries read_zseries(const std::string& path) {
    auto ts = read_tensor_file(path);
    auto find = [&](const std::string& name) -> const NamedTensor& {
        for (const auto& t : ts)
            if (t.name == name) return t;
        throw IoError("series " + path + " is missing tensor '" + name + "'");
    };
    const auto& zs = find("z_series");
    if (zs.shape.size() != 3) throw IoError("series " + path + ": z_series must be rank 3");
    ZSeries s;
    s.checkpoints = zs.shape[0];
    s.states = zs.shape[1];
    s.dz = zs.shape[2];
    s.values = zs.values;
    for (float v : find("steps").values) s.steps.push_back(static_cast<int>(v));
    for (float v : find("state_x").values) s.state_x.push_back(static_cast<int>(v));
    for (float v : find("state_y").values) s.state_y.push_back(static_cast<int>(v));
    return s;
}

// --- run_experiment -----------------------------------------------------------------

namespace {

struct MetricsWriter {
    std::ofstream f;
    explicit MetricsWriter(const std::string& path) : f(path, std::ios::binary) {
        if (!f) throw IoError("cannot write " + path);
        f << "step,score,loss_q,loss_pos,loss_neg,loss_total\n";
    }
    void row(const MetricsRow& r) {
        f << r.step << "," << fmt_g(r.score, 9) << "," << fmt_f(r.loss.q) << "," << fmt_f(r.loss.pos)
          << "," << fmt_f(r.loss.neg) << "," << fmt_f(r.loss.total) << "\n";
    }
};

bool is_grid_kind(const std::string& experiment) {
    return experiment == "foraging" || experiment == "goal-transfer" ||
           experiment == "shuffle-transfer" || experiment == "swap";
}

struct SeriesAccum {
    int states = 0, dz = 0;
    std::vector<float> values;
    std::vector<int> steps;

    void capture(const AgentBundle<float>& bundle, const Env& env, int step) {
        const auto z = encode_states_flat(bundle, env);
        values.insert(values.end(), z.begin(), z.end());
        steps.push_back(step);
        states = env.num_states();
        dz = bundle.spec.latent;
    }

    void write(const std::string& path, const Env& env) const {
        if (steps.empty()) return;
        std::vector<NamedTensor> ts;
        ts.push_back({"z_series", {static_cast<int>(steps.size()), states, dz}, values});
        std::vector<float> st(steps.begin(), steps.end());
        ts.push_back({"steps", {static_cast<int>(steps.size())}, st});
        std::vector<float> sx, sy;
        for (int s = 0; s < states; ++s) {
            auto [x, y] = env.state_coords(s);
            sx.push_back(static_cast<float>(x));
            sy.push_back(static_cast<float>(y));
        }
        ts.push_back({"state_x", {states}, sx});
        ts.push_back({"state_y", {states}, sy});
        write_tensor_file(path, ts);
    }
};

void write_status(const std::string& dir, const std::string& status, const std::string& detail = "") {
    json j;
    j["status"] = status;
    if (!detail.empty()) j["detail"] = detail;
    write_text(dir + "/status.json", j.dump(2) + "\n");
}

}  // namespace

AgentBundle<float> load_run_bundle(const std::string& run_dir, int step) {
    const auto cfg = RunConfig::from_json_file(run_dir + "/config.json");
    auto env = make_run_env(cfg);
    auto bundle = make_run_bundle(cfg, *env);
    load_checkpoint(ckpt_path(run_dir, step), all_params(bundle));
    return bundle;
}

RunResult run_experiment(const RunConfig& cfg) {
    if (cfg.out_dir.empty()) throw ConfigError("run_experiment: output directory not set");
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("cannot create run directory " + cfg.out_dir + ": " + ec.message());
    {
        std::ofstream probe_file(cfg.out_dir + "/.writable", std::ios::binary);
        if (!probe_file) throw IoError("run directory not writable: " + cfg.out_dir);
    }
    fs::remove(cfg.out_dir + "/.writable", ec);

    write_text(cfg.out_dir + "/config.json", cfg.to_json_text());

    auto env = make_run_env(cfg);
    auto bundle = make_run_bundle(cfg, *env);
    write_manifest(cfg.out_dir, cfg, bundle);

    const bool transfer = cfg.experiment == "goal-transfer" || cfg.experiment == "shuffle-transfer";
    const int total = cfg.total_steps();
    std::vector<int> ckpts = cfg.checkpoint_steps;
    if (ckpts.empty()) ckpts = {0, total};
    auto want_ckpt = [&](int step) {
        return std::find(ckpts.begin(), ckpts.end(), step) != ckpts.end();
    };

    ReplayBuffer buffer(cfg.buffer_capacity);
    PolicySpec pol{cfg.policy == "random" ? PolicyKind::kRandom : PolicyKind::kEpsilonGreedy,
                   cfg.epsilon};
    Collector collector(*env, pol, Rng(derive_seed(cfg.seed, "policy")), cfg.episode_cap);
    Rng buffer_rng(derive_seed(cfg.seed, "buffer"));

    auto eval_env = env->clone();
    eval_env->reseed(derive_seed(cfg.seed, "eval"));

    RunResult result;
    result.dir = cfg.out_dir;
    MetricsWriter metrics(cfg.out_dir + "/metrics.csv");
    SeriesAccum series;

    TrainConfig tc;
    tc.batch_size = cfg.batch;
    tc.optimizer = cfg.optimizer == "sgd" ? OptimizerKind::kSgd : OptimizerKind::kAdam;
    tc.base_lr = cfg.base_lr;
    tc.target_sync_period = cfg.sync_period;
    TrainState ts;

    try {
        collector.collect(bundle, buffer, cfg.prefill);
        if (want_ckpt(0)) save_checkpoint(ckpt_path(cfg.out_dir, 0), all_params(bundle));
        if (is_grid_kind(cfg.experiment)) series.capture(bundle, *env, 0);

        auto run_phase = [&](int from_step, int to_step) {
            for (int step = from_step + 1; step <= to_step; ++step) {
                collector.collect(bundle, buffer, cfg.collect_per_step);
                const LossReport rep = train_step(bundle, buffer, tc, ts, buffer_rng);
                if (cfg.eval_every > 0 && step % cfg.eval_every == 0) {
                    MetricsRow row;
                    row.step = step;
                    row.score = evaluate_policy(*eval_env, bundle, cfg.eval_episodes,
                                                eval_env->eval_step_cap());
                    row.loss = rep;
                    metrics.row(row);
                    result.metrics.push_back(row);
                    if (is_grid_kind(cfg.experiment)) series.capture(bundle, *env, step);
                }
                if (want_ckpt(step)) save_checkpoint(ckpt_path(cfg.out_dir, step), all_params(bundle));
            }
        };

        run_phase(0, cfg.steps);

        if (transfer) {
            auto* grid = dynamic_cast<GridEnv*>(env.get());
            if (!grid) throw ContractError("transfer experiments need the gridworld");
            if (cfg.experiment == "goal-transfer") {
                if (cfg.goal_b_x == cfg.goal_x && cfg.goal_b_y == cfg.goal_y)
                    throw ConfigError("goal-transfer: task-B goal must differ from task A");
                grid->set_goal(cfg.goal_b_x, cfg.goal_b_y);
            } else {
                Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
                grid->set_relabel(make_goal_fixing_permutation(*grid, shuffle_rng));
            }
            // stale-task transitions are useless to task B
            buffer.clear();
            Collector collector_b(*env, pol, Rng(derive_seed(cfg.seed, "policy-b")), cfg.episode_cap);
            collector_b.collect(bundle, buffer, cfg.prefill);
            eval_env = env->clone();
            eval_env->reseed(derive_seed(cfg.seed, "eval-b"));
            tc.freeze_repr = true;  // encoder and T freeze; Q head fine-tunes

            for (int step = cfg.steps + 1; step <= total; ++step) {
                collector_b.collect(bundle, buffer, cfg.collect_per_step);
                const LossReport rep = train_step(bundle, buffer, tc, ts, buffer_rng);
                if (cfg.eval_every > 0 && step % cfg.eval_every == 0) {
                    MetricsRow row;
                    row.step = step;
                    row.score = evaluate_policy(*eval_env, bundle, cfg.eval_episodes,
                                                eval_env->eval_step_cap());
                    row.loss = rep;
                    metrics.row(row);
                    result.metrics.push_back(row);
                    if (is_grid_kind(cfg.experiment)) series.capture(bundle, *env, step);
                }
                if (want_ckpt(step)) save_checkpoint(ckpt_path(cfg.out_dir, step), all_params(bundle));
            }
        }

        if (!want_ckpt(total)) save_checkpoint(ckpt_path(cfg.out_dir, total), all_params(bundle));

        if (cfg.experiment == "swap") {
            // choose the most strongly tuned unit with valid probe paths
            auto* grid = dynamic_cast<GridEnv*>(env.get());
            const auto z = encode_states_flat(bundle, *env);
            const int S = env->num_states(), dz = bundle.spec.latent;
            std::vector<std::pair<double, int>> by_var;
            for (int u = 0; u < dz; ++u) {
                double mean = 0.0, var = 0.0;
                for (int s = 0; s < S; ++s) mean += z[static_cast<size_t>(s) * dz + u];
                mean /= S;
                for (int s = 0; s < S; ++s) {
                    const double dv = z[static_cast<size_t>(s) * dz + u] - mean;
                    var += dv * dv;
                }
                by_var.push_back({-var, u});
            }
            std::sort(by_var.begin(), by_var.end());
            SwapProtocol proto;
            bool found = false;
            std::string last_err;
            for (auto& [negvar, u] : by_var) {
                try {
                    proto = build_swap_exposure(bundle, *grid, u);
                    found = true;
                    break;
                } catch (const ProbeSelectionError& e) {
                    last_err = e.what();
                }
            }
            if (!found) throw ContractError("swap: no unit admits probe paths: " + last_err);

            auto pre = probe_z_sweep(bundle, *env);
            write_dump_file(dump_path(cfg.out_dir, "z-sweep", "pre"), pre);

            ReplayBuffer expo(proto.chain.size());
            for (const auto& t : proto.chain) expo.push(t);
            for (int step = 0; step < cfg.exposure_steps; ++step)
                train_step(bundle, expo, tc, ts, buffer_rng);

            auto post = probe_z_sweep(bundle, *env);
            write_dump_file(dump_path(cfg.out_dir, "z-sweep", "post"), post);

            json pj;
            pj["unit"] = proto.unit;
            pj["p_states"] = proto.p_states;
            pj["n_states"] = proto.n_states;
            pj["family"] = cfg.family;
            write_text(cfg.out_dir + "/probes.json", pj.dump(2) + "\n");

            result.swap_unit = proto.unit;
            result.swap_p = proto.p_states;
            result.swap_n = proto.n_states;
            result.swap_delta = swap_response_delta(pre, post, proto.unit, proto.p_states, proto.n_states);
        }

        // figure-feeding dumps per experiment kind
        const std::string fin = std::to_string(total);
        if (cfg.experiment == "foraging")
            write_dump_file(dump_path(cfg.out_dir, "z-sweep", fin), probe_z_sweep(bundle, *env));
        if (cfg.experiment == "circular") {
            write_dump_file(dump_path(cfg.out_dir, "t-rollout", fin),
                            probe_rollout(bundle, *env, "t", cfg.seed));
            write_dump_file(dump_path(cfg.out_dir, "t-rollout-shuffled", fin),
                            probe_rollout(shuffle_t_weights(bundle, cfg.seed), *env, "t", cfg.seed));
            auto pre_bundle = load_run_bundle(cfg.out_dir, 0);
            write_dump_file(dump_path(cfg.out_dir, "t-rollout", "0"),
                            probe_rollout(pre_bundle, *env, "t", cfg.seed));
        }
        if (cfg.experiment == "alt-t" || cfg.experiment == "alt-t-po") {
            write_dump_file(dump_path(cfg.out_dir, "t-conditions", fin),
                            probe_conditions(bundle, *env, "t"));
            write_dump_file(dump_path(cfg.out_dir, "z-conditions", fin),
                            probe_conditions(bundle, *env, "z"));
        }
        if (cfg.experiment == "corridor") {
            write_dump_file(dump_path(cfg.out_dir, "conv1-stimuli", fin),
                            probe_conv1_stimuli(bundle, *env));
            auto pre_bundle = load_run_bundle(cfg.out_dir, 0);
            write_dump_file(dump_path(cfg.out_dir, "conv1-stimuli", "0"),
                            probe_conv1_stimuli(pre_bundle, *env));
        }

        series.write(cfg.out_dir + "/zseries.pxad", *env);
    } catch (const NumericError& e) {
        write_status(cfg.out_dir, "numeric-abort", e.what());
        throw;
    }

    result.final_score = result.metrics.empty() ? 0.0 : result.metrics.back().score;
    write_status(cfg.out_dir, "ok");
    return result;
}

// --- sweep -------------------------------------------------------------------------

namespace {

RunConfig apply_axis(const RunConfig& templ, const std::string& axis, const std::string& value) {
    RunConfig c = templ;
    if (axis == "seed") {
        c.seed = std::stoull(value);
    } else if (axis == "latent") {
        c.latent = std::stoi(value);
    } else if (axis == "gamma") {
        c.gamma_pred = std::stod(value);
    } else if (axis == "epsilon") {
        c.epsilon = std::stod(value);
        c.policy = "egreedy";
    } else if (axis == "p") {
        c.stochastic_p = std::stod(value);
    } else if (axis == "weights") {
        LossWeights w;
        if (std::sscanf(value.c_str(), "%lf:%lf:%lf", &w.q, &w.neg, &w.pos) != 3)
            throw ConfigError("sweep: weights value must be wq:wneg:wpos, got '" + value + "'");
        c.weights = w;
    } else {
        throw ConfigError("sweep: unknown axis '" + axis +
                          "' (expected seed|latent|gamma|epsilon|p|weights)");
    }
    return c;
}

std::string sanitize(const std::string& v) {
    std::string out;
    for (char ch : v) out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-')
                                 ? ch : '_';
    return out;
}

}  // namespace

SweepResult sweep(const RunConfig& templ, const std::string& axis,
                  const std::vector<std::string>& values, const std::string& out_root) {
    if (values.empty()) throw ConfigError("sweep: axis values must be explicit and non-empty");
    std::vector<uint64_t> seeds = templ.seeds.empty() ? std::vector<uint64_t>{templ.seed} : templ.seeds;
    if (axis == "seed") seeds = {0};  // seed comes from the axis itself

    struct Job {
        RunConfig cfg;
        int value_index;
        bool failed = false;
        double final_score = 0.0;
        std::string dir;
    };
    std::vector<Job> jobs;
    for (size_t vi = 0; vi < values.size(); ++vi) {
        for (uint64_t s : seeds) {
            RunConfig c = apply_axis(templ, axis, values[vi]);
            if (axis != "seed") c.seed = s;
            c.seeds.clear();
            c.out_dir = out_root + "/" + axis + "=" + sanitize(values[vi]) + "/seed=" +
                        std::to_string(c.seed);
            jobs.push_back({std::move(c), static_cast<int>(vi)});
        }
    }

    // runs share nothing mutable; parallelize at run granularity
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < jobs.size(); ++i) {
        try {
            auto r = run_experiment(jobs[i].cfg);
            jobs[i].final_score = r.final_score;
            jobs[i].dir = r.dir;
        } catch (const std::exception& e) {
            jobs[i].failed = true;
            jobs[i].dir = jobs[i].cfg.out_dir;
            std::error_code ec;
            fs::create_directories(jobs[i].cfg.out_dir, ec);
            write_text(jobs[i].cfg.out_dir + "/failure.txt", std::string(e.what()) + "\n");
        }
    }

    SweepResult out;
    std::ofstream sf(out_root + "/summary.csv", std::ios::binary);
    if (!sf) throw IoError("cannot write sweep summary in " + out_root);
    sf << "axis,value,n,failures,mean_final_score,sem_final_score\n";
    for (size_t vi = 0; vi < values.size(); ++vi) {
        SweepValueSummary s;
        s.value = values[vi];
        std::vector<double> scores;
        for (const auto& j : jobs) {
            if (j.value_index != static_cast<int>(vi)) continue;
            out.run_dirs.push_back(j.dir);
            if (j.failed) {
                ++s.failures;
                continue;
            }
            scores.push_back(j.final_score);
            ++s.n;
        }
        if (!scores.empty()) {
            s.mean_final_score = mean_of(scores);
            s.sem_final_score = sem_of(scores);
        }
        sf << axis << "," << s.value << "," << s.n << "," << s.failures << ","
           << fmt_g(s.mean_final_score) << "," << fmt_g(s.sem_final_score) << "\n";
        out.summary.push_back(std::move(s));
    }
    return out;
}

// --- dump subcommand ------------------------------------------------------------------

std::string dump_activations(const std::string& run_dir, const std::string& probe, int step) {
    if (std::find(probe_tags().begin(), probe_tags().end(), probe) == probe_tags().end()) {
        std::string tags;
        for (const auto& t : probe_tags()) tags += (tags.empty() ? "" : ", ") + t;
        throw ConfigError("unknown probe '" + probe + "'; valid probes: " + tags);
    }
    const auto cfg = RunConfig::from_json_file(run_dir + "/config.json");
    if (!fs::exists(ckpt_path(run_dir, step)))
        throw ConfigError("no checkpoint at step " + std::to_string(step) + " in " + run_dir +
                          "; add it to train.checkpoint_steps and re-run");
    auto bundle = load_run_bundle(run_dir, step);
    auto env = make_run_env(cfg);
    auto dump = run_probe(cfg, bundle, *env, probe);
    const auto path = dump_path(run_dir, probe, std::to_string(step));
    write_dump_file(path, dump);
    return path;
}

// --- analyze ----------------------------------------------------------------------------

namespace {

struct Csv {
    std::ofstream f;
    explicit Csv(const std::string& path) : f(path, std::ios::binary) {
        if (!f) throw IoError("cannot write " + path);
    }
    void line(const std::string& s) { f << s << "\n"; }
};

ActivationDump need_dump(const std::string& run_dir, const std::string& probe,
                         const std::string& step) {
    const auto path = dump_path(run_dir, probe, step);
    if (!fs::exists(path))
        throw ConfigError("missing " + path + "; produce it with: pxrl dump --run " + run_dir +
                          " --probe " + probe + " --step " + step);
    return read_dump_file(path);
}

std::string final_step_str(const std::string& run_dir) {
    const auto cfg = RunConfig::from_json_file(run_dir + "/config.json");
    return std::to_string(cfg.total_steps());
}

std::string run_label(const std::string& run_dir) {
    return fs::path(run_dir).filename().string();
}

std::string run_family(const std::string& run_dir) {
    return RunConfig::from_json_file(run_dir + "/config.json").family;
}

}  // namespace

std::vector<std::string> analyze(const std::vector<std::string>& run_dirs, const std::string& name,
                                 const std::string& out_dir, bool svg) {
    if (run_dirs.empty()) throw ConfigError("analyze: no run directories given");
    for (const auto& d : run_dirs)
        if (!fs::exists(d + "/config.json"))
            throw ConfigError("analyze: " + d + " is not a run directory (config.json missing)");
    fs::create_directories(out_dir);
    std::vector<std::string> written;
    auto out = [&](const std::string& base) {
        written.push_back(out_dir + "/" + base);
        return written.back();
    };

    if (name == "fig2c") {
        const auto& dir = run_dirs.front();
        const auto d = need_dump(dir, "z-sweep", final_step_str(dir));
        std::vector<float> z(static_cast<size_t>(d.states) * d.units);
        for (int s = 0; s < d.states; ++s)
            for (int u = 0; u < d.units; ++u)
                z[static_cast<size_t>(s) * d.units + u] = d.value(u, s);
        const auto p = pca3(z, d.states, d.units);
        const auto cfg = RunConfig::from_json_file(dir + "/config.json");
        Csv csv(out("fig2c.csv"));
        csv.line("state,x,y,quadrant,pc1,pc2,pc3,evr1,evr2,evr3,low_rank");
        for (int s = 0; s < d.states; ++s) {
            const int q = (d.state_x[s] >= cfg.side / 2 ? 1 : 0) + (d.state_y[s] >= cfg.side / 2 ? 2 : 0);
            csv.line(std::to_string(s) + "," + std::to_string(d.state_x[s]) + "," +
                     std::to_string(d.state_y[s]) + "," + std::to_string(q) + "," +
                     fmt_g(p.coords[s * 3 + 0]) + "," + fmt_g(p.coords[s * 3 + 1]) + "," +
                     fmt_g(p.coords[s * 3 + 2]) + "," + fmt_g(p.explained_variance_ratio[0]) + "," +
                     fmt_g(p.explained_variance_ratio[1]) + "," +
                     fmt_g(p.explained_variance_ratio[2]) + "," + (p.low_rank ? "1" : "0"));
        }
        Csv edges(out("fig2c_edges.csv"));
        edges.line("state_a,state_b");
        for (int a = 0; a < d.states; ++a)
            for (int b = a + 1; b < d.states; ++b)
                if (std::abs(d.state_x[a] - d.state_x[b]) + std::abs(d.state_y[a] - d.state_y[b]) == 1)
                    edges.line(std::to_string(a) + "," + std::to_string(b));
        if (svg) {
            SvgPlot plot;
            std::vector<double> xs, ys;
            for (int s = 0; s < d.states; ++s) {
                xs.push_back(p.coords[s * 3 + 0]);
                ys.push_back(p.coords[s * 3 + 1]);
            }
            plot.add_scatter(xs, ys, "steelblue");
            plot.write(out("fig2c.svg"));
        }
        return written;
    }

    if (name == "fig2f") {
        Csv csv(out("fig2f.csv"));
        csv.line("run,silent_fraction,units,threshold");
        std::vector<double> fracs;
        for (const auto& dir : run_dirs) {
            const auto d = need_dump(dir, "z-sweep", final_step_str(dir));
            const double f = silent_fraction(d);
            fracs.push_back(f);
            csv.line(run_label(dir) + "," + fmt_g(f) + "," + std::to_string(d.units) + ",1e-06");
        }
        if (fracs.size() > 1) csv.line("mean," + fmt_g(mean_of(fracs)) + ",,");
        return written;
    }

    if (name == "fig2g" || name == "fig3e") {
        Csv csv(out(name + ".csv"));
        csv.line(name == "fig2g" ? "run,step,mean_cosine,flagged_pairs" : "run,step,pair,cosine");
        SvgPlot plot;
        for (const auto& dir : run_dirs) {
            const auto path = dir + "/zseries.pxad";
            if (!fs::exists(path))
                throw ConfigError("missing " + path + "; the run kind does not record latent series");
            const auto series = read_zseries(path);
            const auto cfg = RunConfig::from_json_file(dir + "/config.json");
            if (name == "fig2g") {
                int flagged = 0;
                const auto traj =
                    pairwise_cosine_trajectory(series, 100, derive_seed(cfg.seed, "analysis-pairs"), &flagged);
                std::vector<double> xs, ys;
                for (int k = 0; k < series.checkpoints; ++k) {
                    csv.line(run_label(dir) + "," + std::to_string(series.steps[k]) + "," +
                             fmt_g(traj[k]) + "," + std::to_string(flagged));
                    xs.push_back(series.steps[k]);
                    ys.push_back(traj[k]);
                }
                if (svg) plot.add_line(xs, ys, "tomato");
            } else {
                const auto corners = corner_separation(series, cfg.side);
                for (int k = 0; k < series.checkpoints; ++k)
                    for (int pi = 0; pi < 6; ++pi) {
                        const auto [a, b] = corners.pairs[pi];
                        csv.line(run_label(dir) + "," + std::to_string(series.steps[k]) + "," +
                                 std::to_string(series.state_x[a]) + ":" + std::to_string(series.state_y[a]) +
                                 "-" + std::to_string(series.state_x[b]) + ":" +
                                 std::to_string(series.state_y[b]) + "," + fmt_g(corners.series[k][pi]));
                    }
            }
        }
        if (svg && name == "fig2g") plot.write(out("fig2g.svg"));
        return written;
    }

    if (name == "fig4b") {
        Csv si_csv(out("fig4b_si.csv"));
        si_csv.line("run,unit,spatial_information");
        Csv map_csv(out("fig4b_maps.csv"));
        map_csv.line("run,unit,x,y,rate");
        for (const auto& dir : run_dirs) {
            const auto d = need_dump(dir, "t-rollout", final_step_str(dir));
            std::vector<std::pair<double, int>> si;
            for (int u = 0; u < d.units; ++u) {
                // T outputs are unconstrained; information is taken on |response|
                auto m = rate_map(d, u);
                for (auto& r : m.rate) r = std::fabs(r);
                si.push_back({spatial_information(m), u});
            }
            std::sort(si.rbegin(), si.rend());
            for (const auto& [score, u] : si)
                si_csv.line(run_label(dir) + "," + std::to_string(u) + "," + fmt_g(score));
            for (int k = 0; k < std::min(4, d.units); ++k) {
                const int u = si[k].second;
                for (int s = 0; s < d.states; ++s)
                    map_csv.line(run_label(dir) + "," + std::to_string(u) + "," +
                                 std::to_string(d.state_x[s]) + "," + std::to_string(d.state_y[s]) + "," +
                                 fmt_g(d.value(u, s)));
            }
        }
        return written;
    }

    if (name == "fig4f") {
        Csv csv(out("fig4f.csv"));
        csv.line("run,unit,shift,tie_flagged");
        std::vector<double> pooled;
        int excluded = 0;
        for (const auto& dir : run_dirs) {
            const auto pre = need_dump(dir, "t-rollout", "0");
            const auto post = need_dump(dir, "t-rollout", final_step_str(dir));
            const auto r = field_peak_shift(pre, post);
            excluded += r.excluded_flat;
            for (size_t i = 0; i < r.units.size(); ++i) {
                csv.line(run_label(dir) + "," + std::to_string(r.units[i]) + "," + fmt_g(r.shifts[i]) +
                         "," + (r.tie_flagged[i] ? "1" : "0"));
                pooled.push_back(r.shifts[i]);
            }
        }
        Csv sm(out("fig4f_summary.csv"));
        sm.line("n_units,excluded_flat,median_shift");
        sm.line(std::to_string(pooled.size()) + "," + std::to_string(excluded) + "," +
                fmt_g(pooled.empty() ? 0.0 : median_of(pooled)));
        return written;
    }

    if (name == "fig4g") {
        Csv csv(out("fig4g.csv"));
        csv.line("run,kind,unit,distance");
        std::vector<double> model, shuffle;
        for (const auto& dir : run_dirs) {
            const auto fin = final_step_str(dir);
            const auto post = need_dump(dir, "t-rollout", fin);
            const auto ctrl = need_dump(dir, "t-rollout-shuffled", fin);
            if (post.reward_state < 0)
                throw ConfigError("fig4g: dump in " + dir + " carries no reward state (not a circular run?)");
            const auto rm = peak_reward_distances(post, post.reward_state);
            const auto rs = peak_reward_distances(ctrl, post.reward_state);
            for (size_t i = 0; i < rm.units.size(); ++i) {
                csv.line(run_label(dir) + ",model," + std::to_string(rm.units[i]) + "," +
                         fmt_g(rm.distances[i]));
                model.push_back(rm.distances[i]);
            }
            for (size_t i = 0; i < rs.units.size(); ++i) {
                csv.line(run_label(dir) + ",shuffle," + std::to_string(rs.units[i]) + "," +
                         fmt_g(rs.distances[i]));
                shuffle.push_back(rs.distances[i]);
            }
        }
        Csv sm(out("fig4g_summary.csv"));
        sm.line("model_median,shuffle_median,n_model,n_shuffle");
        sm.line(fmt_g(model.empty() ? 0.0 : median_of(model)) + "," +
                fmt_g(shuffle.empty() ? 0.0 : median_of(shuffle)) + "," +
                std::to_string(model.size()) + "," + std::to_string(shuffle.size()));
        return written;
    }

    if (name == "fig4i") {
        Csv csv(out("fig4i.csv"));
        csv.line("run,position,similarity,flagged");
        std::vector<std::vector<double>> by_pos(5);
        for (const auto& dir : run_dirs) {
            const auto d = need_dump(dir, "t-conditions", final_step_str(dir));
            const auto prof = split_similarity_profile(d);
            for (int s = 0; s < d.states; ++s) {
                csv.line(run_label(dir) + "," + std::to_string(d.state_y[s]) + "," + fmt_g(prof[s].value) +
                         "," + (prof[s].flagged ? "1" : "0"));
                if (d.state_y[s] < static_cast<int>(by_pos.size())) by_pos[d.state_y[s]].push_back(prof[s].value);
            }
        }
        Csv sm(out("fig4i_summary.csv"));
        sm.line("position,mean_similarity,sem,n");
        for (size_t pos = 0; pos < by_pos.size(); ++pos)
            if (!by_pos[pos].empty())
                sm.line(std::to_string(pos) + "," + fmt_g(mean_of(by_pos[pos])) + "," +
                        fmt_g(sem_of(by_pos[pos])) + "," + std::to_string(by_pos[pos].size()));
        return written;
    }

    if (name == "fig5d") {
        Csv csv(out("fig5d.csv"));
        csv.line("run,family,unit,k,delta");
        std::map<std::string, std::array<std::vector<double>, 3>> by_family;
        for (const auto& dir : run_dirs) {
            const auto ppath = dir + "/probes.json";
            if (!fs::exists(ppath)) throw ConfigError("missing " + ppath + " (not a swap run?)");
            std::ifstream pf(ppath);
            json pj = json::parse(pf);
            const int unit = pj.at("unit").get<int>();
            std::array<int, 3> ps{}, ns{};
            for (int k = 0; k < 3; ++k) {
                ps[k] = pj.at("p_states")[k].get<int>();
                ns[k] = pj.at("n_states")[k].get<int>();
            }
            const auto pre = need_dump(dir, "z-sweep", "pre");
            const auto post = need_dump(dir, "z-sweep", "post");
            const auto delta = swap_response_delta(pre, post, unit, ps, ns);
            const auto fam = run_family(dir);
            for (int k = 0; k < 3; ++k) {
                csv.line(run_label(dir) + "," + fam + "," + std::to_string(unit) + "," +
                         std::to_string(k + 1) + "," + fmt_g(delta[k]));
                by_family[fam][k].push_back(delta[k]);
            }
        }
        Csv sm(out("fig5d_summary.csv"));
        sm.line("family,k,mean_delta,sem,n");
        for (const auto& [fam, arr] : by_family)
            for (int k = 0; k < 3; ++k)
                if (!arr[k].empty())
                    sm.line(fam + "," + std::to_string(k + 1) + "," + fmt_g(mean_of(arr[k])) + "," +
                            fmt_g(sem_of(arr[k])) + "," + std::to_string(arr[k].size()));
        if (by_family.size() == 2) {
            auto it = by_family.begin();
            const auto& a = *it++;
            const auto& b = *it;
            Csv tt(out("fig5d_test.csv"));
            tt.line("k,family_a,family_b,t,p_two");
            for (int k = 0; k < 3; ++k) {
                if (a.second[k].size() < 2 || b.second[k].size() < 2) continue;
                const auto r = welch_t_test(a.second[k], b.second[k]);
                tt.line(std::to_string(k + 1) + "," + a.first + "," + b.first + "," + fmt_g(r.t) + "," +
                        fmt_g(r.p_two));
            }
        }
        return written;
    }

    if (name == "fig5f") {
        Csv csv(out("fig5f.csv"));
        csv.line("run,unit,selectivity_pre,selectivity_post");
        std::vector<double> pre_all, post_all;
        for (const auto& dir : run_dirs) {
            const auto pre = need_dump(dir, "conv1-stimuli", "0");
            const auto post = need_dump(dir, "conv1-stimuli", final_step_str(dir));
            const auto spre = selectivity_index(pre);
            const auto spost = selectivity_index(post);
            // pair by unit id; drop units excluded in either phase
            std::map<int, double> pre_by, post_by;
            for (size_t i = 0; i < spre.units.size(); ++i) pre_by[spre.units[i]] = spre.index[i];
            for (size_t i = 0; i < spost.units.size(); ++i) post_by[spost.units[i]] = spost.index[i];
            for (const auto& [u, v] : pre_by) {
                auto it = post_by.find(u);
                if (it == post_by.end()) continue;
                csv.line(run_label(dir) + "," + std::to_string(u) + "," + fmt_g(v) + "," +
                         fmt_g(it->second));
                pre_all.push_back(v);
                post_all.push_back(it->second);
            }
        }
        Csv sm(out("fig5f_summary.csv"));
        sm.line("n_units,mean_pre,mean_post,t,p_one_tailed");
        if (pre_all.size() >= 2) {
            const auto r = paired_t_test(pre_all, post_all);
            sm.line(std::to_string(pre_all.size()) + "," + fmt_g(mean_of(pre_all)) + "," +
                    fmt_g(mean_of(post_all)) + "," + fmt_g(r.t) + "," + fmt_g(r.p_one_greater));
        }
        return written;
    }

    if (name == "scores") {
        Csv csv(out("scores.csv"));
        csv.line("run,family,final_score");
        std::vector<double> scores;
        for (const auto& dir : run_dirs) {
            std::ifstream mf(dir + "/metrics.csv");
            if (!mf) throw ConfigError("missing metrics.csv in " + dir);
            std::string line, last;
            std::getline(mf, line);  // header
            while (std::getline(mf, line))
                if (!line.empty()) last = line;
            double score = 0.0;
            if (!last.empty()) {
                const auto c1 = last.find(',');
                const auto c2 = last.find(',', c1 + 1);
                score = std::stod(last.substr(c1 + 1, c2 - c1 - 1));
            }
            scores.push_back(score);
            csv.line(run_label(dir) + "," + run_family(dir) + "," + fmt_g(score));
        }
        if (scores.size() > 1)
            csv.line("mean,," + fmt_g(mean_of(scores)));
        return written;
    }

    throw ConfigError("unknown analysis '" + name +
                      "'; valid: fig2c fig2f fig2g fig3e fig4b fig4f fig4g fig4i fig5d fig5f scores");
}

}  // namespace pxrl
