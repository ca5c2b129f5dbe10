#pragma once

#include <array>
#include <string>
#include <vector>

#include "pxrl/common.hpp"

namespace pxrl {

// Unit x state x condition activation record consumed by every analysis.
// `values` holds per-(unit,state,condition) mean activations; `visits` the
// occupancy counts behind those means (all-ones for deterministic sweeps).
struct ActivationDump {
    std::string layer;  // "z" | "t" | "conv1"
    int units = 0;
    int states = 0;
    int conds = 1;
    std::vector<float> values;
    std::vector<float> visits;
    std::vector<int> state_x, state_y;
    int reward_state = -1;

    float value(int u, int s, int c = 0) const {
        return values[(static_cast<size_t>(u) * states + s) * conds + c];
    }
    float visit(int s, int c = 0) const { return visits[static_cast<size_t>(s) * conds + c]; }
};

struct RateMap {
    std::vector<double> rate;       // mean activation per state
    std::vector<double> occupancy;  // sums to 1
};

// Mean activation per state; errors if any state went unvisited.
RateMap rate_map(const ActivationDump& dump, int unit, int cond = 0);

// Skaggs information score, bits per unit activation; 0 when the mean rate
// vanishes. Negative rates are a contract violation (ReLU layers only).
double spatial_information(const RateMap& map);

// Fraction of units whose activation stays below the threshold in every
// state and condition.
double silent_fraction(const ActivationDump& dump, double threshold = 1e-6);

struct CosineResult {
    double value = 0.0;
    bool flagged = false;  // zero vector involved
};

// Both zero -> 1 (collapsed pair, flagged); one zero -> 0, flagged.
CosineResult cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Latent states of every arena state captured at a series of checkpoints.
struct ZSeries {
    int checkpoints = 0;
    int states = 0;
    int dz = 0;
    std::vector<float> values;  // [checkpoint][state][dz]
    std::vector<int> steps;
    std::vector<int> state_x, state_y;

    const float* z(int k, int s) const {
        return values.data() + (static_cast<size_t>(k) * states + s) * dz;
    }
};

// Mean cosine similarity of a fixed random set of state pairs per checkpoint.
std::vector<double> pairwise_cosine_trajectory(const ZSeries& series, int n_pairs,
                                               uint64_t pair_seed, int* flagged_pairs = nullptr);

// Cosine series for the six unordered corner pairs of a square arena.
struct CornerSeparation {
    std::array<std::pair<int, int>, 6> pairs;  // state indices
    std::vector<std::array<double, 6>> series; // per checkpoint
};
CornerSeparation corner_separation(const ZSeries& series, int side);

struct Pca3Result {
    int states = 0;
    std::vector<double> coords;      // [state][3]
    std::array<double, 3> explained_variance_ratio{};
    std::vector<std::vector<double>> axes;  // top-3 principal directions, orthonormal
    bool low_rank = false;
};

// Mean-centered projection onto the top-3 principal axes of the state cloud.
Pca3Result pca3(const std::vector<float>& z_by_state, int states, int dz);

struct PeakShiftResult {
    std::vector<int> units;        // units included
    std::vector<double> shifts;    // signed track fraction, + = movement direction
    std::vector<bool> tie_flagged;
    int excluded_flat = 0;
    double median = 0.0;
};

// Circular displacement of per-unit rate-map peaks between two dumps over
// the same ring.
PeakShiftResult field_peak_shift(const ActivationDump& pre, const ActivationDump& post);

struct RewardDistanceResult {
    std::vector<int> units;
    std::vector<double> distances;  // signed track fraction, 0 = reward, - = before
    int excluded_flat = 0;
    double median = 0.0;
};

RewardDistanceResult peak_reward_distances(const ActivationDump& maps, int reward_state);

// Left/right population-vector similarity per corridor position (conds must
// be 2, states = positions).
std::vector<CosineResult> split_similarity_profile(const ActivationDump& dump);

struct SelectivityResult {
    std::vector<int> units;
    std::vector<double> index;  // (R_V - R_A) / (R_V + R_A)
    int excluded = 0;
};

// conds = {vertical=0, angled=1}; responses pooled per unit beforehand.
SelectivityResult selectivity_index(const ActivationDump& dump);

// Delta(P_k - N_k) between two unit-response dumps at the probe states.
std::array<double, 3> swap_response_delta(const ActivationDump& pre, const ActivationDump& post,
                                          int unit, const std::array<int, 3>& p_states,
                                          const std::array<int, 3>& n_states);

// --- statistics -------------------------------------------------------------

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p_two = 1.0;
    double p_one_greater = 1.0;  // alternative: first sample mean greater
};

TTestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);
// alternative: mean(post - pre) > 0
TTestResult paired_t_test(const std::vector<double>& pre, const std::vector<double>& post);

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y);
double median_of(std::vector<double> v);
double mean_of(const std::vector<double>& v);
double sem_of(const std::vector<double>& v);

}  // namespace pxrl
