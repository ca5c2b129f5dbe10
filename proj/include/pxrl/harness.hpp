#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "pxrl/analysis.hpp"
#include "pxrl/protocols.hpp"
#include "pxrl/training.hpp"

namespace pxrl {

inline constexpr double kDefaultBaseLr = 30.0;

// One run = one experiment kind, one seed, one output directory. Every field
// is serialized verbatim into the run directory; unknown config keys are
// rejected.
struct RunConfig {
    std::string experiment = "foraging";  // foraging | goal-transfer | shuffle-transfer |
                                          // circular | alt-t | alt-t-po | corridor | swap
    uint64_t seed = 1;
    std::vector<uint64_t> seeds;          // sweep only; defaults to {seed}

    // model
    std::string family = "pred";          // mf | neg | pred
    double gamma_pred = 0.0;
    std::string variant = "base";
    int latent = 10;
    double gamma_q = 0.9;
    std::optional<LossWeights> weights;   // override of the published per-family rates

    // environment
    std::string env_mode = "shuffled";    // plain | shuffled | image-bank
    int side = 8;
    double stochastic_p = 0.0;
    int goal_x = 2, goal_y = 6;
    std::string image_bank_index;
    int image_w = 32, image_h = 32;

    // training
    int steps = 600;
    std::string optimizer = "adam";      // adam | sgd
    double base_lr = kDefaultBaseLr;
    int batch = 64;
    int sync_period = 5;
    int collect_per_step = 8;
    int buffer_capacity = 10000;
    int prefill = 2000;
    int episode_cap = 200;
    std::string policy = "random";        // random | egreedy
    double epsilon = 1.0;
    int eval_every = 10;
    int eval_episodes = 10;
    std::vector<int> checkpoint_steps;    // default {0, total steps}

    // transfer phase (goal-transfer, shuffle-transfer)
    int transfer_steps = 100;
    int goal_b_x = 5, goal_b_y = 1;

    // swap-exposure phase
    int exposure_steps = 120;

    std::string out_dir;

    int total_steps() const;

    static RunConfig from_json_text(const std::string& text);
    static RunConfig from_json_file(const std::string& path);
    std::string to_json_text() const;
};

struct MetricsRow {
    int step = 0;
    double score = 0.0;
    LossReport loss;
};

struct RunResult {
    std::string dir;
    std::string status = "ok";
    std::vector<MetricsRow> metrics;
    double final_score = 0.0;
    // populated by swap runs
    int swap_unit = -1;
    std::array<int, 3> swap_p{}, swap_n{};
    std::array<double, 3> swap_delta{};
};

// Executes the configured collect/train/evaluate loop, persisting metrics,
// checkpoints, activation dumps, and a machine-readable status into the run
// directory.
RunResult run_experiment(const RunConfig& cfg);

struct SweepValueSummary {
    std::string value;
    int n = 0, failures = 0;
    double mean_final_score = 0.0;
    double sem_final_score = 0.0;
};

struct SweepResult {
    std::vector<SweepValueSummary> summary;
    std::vector<std::string> run_dirs;
};

// Independent runs over axis x seeds; partial failures are recorded and the
// sweep continues. axis is one of: seed, latent, gamma, epsilon, p, weights.
SweepResult sweep(const RunConfig& templ, const std::string& axis,
                  const std::vector<std::string>& values, const std::string& out_root);

// Valid probe tags for dump_activations / the dump subcommand.
const std::vector<std::string>& probe_tags();

// Recomputes a probe from the checkpoint stored at `step` in the run
// directory and writes dump_<probe>_<step>.pxad there.
std::string dump_activations(const std::string& run_dir, const std::string& probe, int step);

ActivationDump read_dump_file(const std::string& path);
void write_dump_file(const std::string& path, const ActivationDump& dump);

ZSeries read_zseries(const std::string& path);

// Emits the named figure-analog CSV table(s) computed from one or more run
// directories; returns the paths written.
std::vector<std::string> analyze(const std::vector<std::string>& run_dirs, const std::string& name,
                                 const std::string& out_dir, bool svg = false);

// Rebuilds the bundle recorded in a run directory at a given checkpoint step.
AgentBundle<float> load_run_bundle(const std::string& run_dir, int step);

// Environment factory used by runs and probes (honors the config's env seed).
std::unique_ptr<Env> make_run_env(const RunConfig& cfg);

}  // namespace pxrl
