#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pxrl/common.hpp"
#include "pxrl/rng.hpp"

namespace pxrl {

// Grid actions. "Up" increases y.
enum GridAction : int { kLeft = 0, kRight = 1, kUp = 2, kDown = 3 };

enum class ObsMode { kPlain, kShuffled, kImageBank };

struct StepResult {
    std::vector<float> obs;
    float reward = 0.0f;
    bool terminal = false;
};

class Env {
public:
    virtual ~Env() = default;
    virtual int num_actions() const = 0;
    virtual Shape obs_shape() const = 0;

    // Starts a new episode and returns the first observation.
    virtual std::vector<float> reset() = 0;
    virtual StepResult step(int action) = 0;
    virtual bool terminal() const = 0;

    // State probing for analyses: history-free observation of each state.
    virtual int num_states() const = 0;
    virtual int state_index() const = 0;
    virtual std::vector<float> render_state(int s) const = 0;
    virtual std::pair<int, int> state_coords(int s) const = 0;

    virtual int eval_step_cap() const = 0;  // 4 * arena side
    virtual void reseed(uint64_t seed) = 0;
    virtual std::unique_ptr<Env> clone() const = 0;
};

// With probability p the executed transition follows one of the other three
// actions, each equally likely.
int apply_stochastic_transition(int action, int num_actions, double p, Rng& rng);

// Fixed-size raw RGB images assigned to states from a user-supplied
// directory; index file lines are "x,y,filename".
struct ImageBank {
    int width = 0, height = 0;
    // image per cell id (y*grid_w+x); each is 3*height*width floats in [0,1]
    std::vector<std::vector<float>> images;

    static ImageBank load(const std::string& index_path, int grid_w, int grid_h,
                          int img_w, int img_h);
};

// Open rectangular arena with an invisible goal. Observations are one-hot
// agent-position images, optionally pixel-shuffled or replaced by bank
// images. Supports static walls (used by the chain task), stochastic
// transitions, and the relabeling used by the transition-shuffle transfer.
class GridEnv : public Env {
public:
    struct Config {
        int width = 8, height = 8;
        int goal_x = 2, goal_y = 6;
        ObsMode mode = ObsMode::kPlain;
        double stochastic_p = 0.0;
        std::set<std::pair<int, int>> walls;
        std::shared_ptr<const ImageBank> bank;
        uint64_t seed = 0;
    };

    explicit GridEnv(Config cfg);

    int num_actions() const override { return 4; }
    Shape obs_shape() const override;
    std::vector<float> reset() override;
    StepResult step(int action) override;
    bool terminal() const override { return terminal_; }
    int num_states() const override { return static_cast<int>(cells_.size()); }
    int state_index() const override;
    std::vector<float> render_state(int s) const override;
    std::pair<int, int> state_coords(int s) const override { return cells_[s]; }
    int eval_step_cap() const override { return 4 * std::max(cfg_.width, cfg_.height); }
    void reseed(uint64_t seed) override { rng_ = Rng(seed); }
    std::unique_ptr<Env> clone() const override { return std::make_unique<GridEnv>(*this); }

    // task mutation used by the transfer protocols
    void set_goal(int x, int y);
    std::pair<int, int> goal() const { return {cfg_.goal_x, cfg_.goal_y}; }
    // Relabels cells by a permutation that fixes the goal; every (state,
    // action) edge stays deterministic, degree 4, and reversible.
    void set_relabel(std::vector<int> perm);
    const std::vector<int>& relabel() const { return relabel_; }
    bool is_wall(int x, int y) const;
    int cell_id(int x, int y) const { return y * cfg_.width + x; }
    int state_of_cell(int cell) const;  // -1 when the cell is a wall
    const std::vector<float>& pixel_permutation_image(int s) const;

    // Raw deterministic move on the unrelabeled grid (walls and bounds clamp).
    std::pair<int, int> move(std::pair<int, int> from, int action) const;

private:
    std::vector<float> render_cell(int x, int y) const;

    Config cfg_;
    Rng rng_;
    std::vector<std::pair<int, int>> cells_;  // visitable cells, row-major
    std::vector<int> state_of_cell_;
    std::vector<int> pixel_perm_;   // plain-index -> shuffled-index
    std::vector<int> relabel_;      // empty when identity
    std::vector<int> relabel_inv_;
    std::pair<int, int> agent_{0, 0};
    bool terminal_ = true;
};

// Builds a goal-fixing random relabeling permutation over all cells.
std::vector<int> make_goal_fixing_permutation(const GridEnv& env, Rng& rng);

// The 28 perimeter cells of the 8x8 arena traversed in ring order. Actions:
// 0 = clockwise, 1 = counterclockwise. Reward is delivered only when the
// reward state is entered by a clockwise move.
class CircularTrackEnv : public Env {
public:
    static constexpr int kSide = 8;
    static constexpr int kActClockwise = 0;
    static constexpr int kActCounter = 1;

    CircularTrackEnv(uint64_t seed, int reward_state = -1);  // -1: random

    int num_actions() const override { return 2; }
    Shape obs_shape() const override { return {1, kSide, kSide}; }
    std::vector<float> reset() override;
    StepResult step(int action) override;
    bool terminal() const override { return terminal_; }
    int num_states() const override { return static_cast<int>(ring_.size()); }
    int state_index() const override { return pos_; }
    std::vector<float> render_state(int s) const override;
    std::pair<int, int> state_coords(int s) const override { return ring_[s]; }
    int eval_step_cap() const override { return 4 * kSide; }
    void reseed(uint64_t seed) override { rng_ = Rng(seed); }
    std::unique_ptr<Env> clone() const override { return std::make_unique<CircularTrackEnv>(*this); }

    int reward_state() const { return reward_state_; }
    static std::vector<std::pair<int, int>> ring_cells();

private:
    Rng rng_;
    std::vector<std::pair<int, int>> ring_;
    int reward_state_ = 0;
    int pos_ = 0;
    bool terminal_ = true;
};

// 5x5 alternating-T maze. Trials strictly alternate left-turn and
// right-turn; invisible barriers make the wrong arm unreachable during a
// trial. The agent enters from the corner below the previously rewarded
// arm, crosses to the center stem at (2,0), ascends to the decision point
// (2,4) (rewarded once per trial), and is rewarded and done at the correct
// arm end. With memory=true the observation is the 6-frame decayed trace
// sum with alpha=0.9, reset at trial start.
class AltTMazeEnv : public Env {
public:
    static constexpr int kSide = 5;
    static constexpr int kTraceLen = 6;
    static constexpr float kTraceAlpha = 0.9f;

    explicit AltTMazeEnv(uint64_t seed, bool memory);

    int num_actions() const override { return 4; }
    Shape obs_shape() const override { return {1, kSide, kSide}; }
    std::vector<float> reset() override;
    StepResult step(int action) override;
    bool terminal() const override { return terminal_; }
    int num_states() const override { return kSide * kSide; }
    int state_index() const override { return agent_.second * kSide + agent_.first; }
    std::vector<float> render_state(int s) const override;
    std::pair<int, int> state_coords(int s) const override { return {s % kSide, s / kSide}; }
    int eval_step_cap() const override { return 4 * kSide; }
    void reseed(uint64_t seed) override { rng_ = Rng(seed); }
    std::unique_ptr<Env> clone() const override { return std::make_unique<AltTMazeEnv>(*this); }

    bool memory() const { return memory_; }
    int trial_type() const { return trial_type_; }  // 0 = left-turn, 1 = right-turn

    // Deterministic figure-8 trajectory of one trial: (cell, action taken).
    static std::vector<std::pair<std::pair<int, int>, int>> canonical_trial_path(int trial_type);

    bool blocked(int x, int y) const;
    std::vector<float> current_observation() const;

private:
    void push_frame(std::pair<int, int> cell);

    Rng rng_;
    bool memory_;
    int trial_type_ = 1;  // reset() flips, so the first trial is left (0)
    std::pair<int, int> agent_{0, 0};
    bool terminal_ = true;
    bool decision_rewarded_ = false;
    std::vector<std::pair<int, int>> trace_;  // newest first
};

// Linear corridor task: four approach positions showing a uniform gray
// image, then six corridor positions showing either vertical stripes
// (rewarded at the end) or 45-degree bands (unrewarded), drawn uniformly
// per trial. Actions: 0 = forward, 1 = stay.
class CorridorEnv : public Env {
public:
    static constexpr int kSide = 8;
    static constexpr int kApproach = 4;
    static constexpr int kCorridor = 6;
    enum Stimulus : int { kStimApproach = 0, kStimVertical = 1, kStimAngled = 2 };

    explicit CorridorEnv(uint64_t seed);

    int num_actions() const override { return 2; }
    Shape obs_shape() const override { return {1, kSide, kSide}; }
    std::vector<float> reset() override;
    StepResult step(int action) override;
    bool terminal() const override { return terminal_; }
    int num_states() const override { return 3; }  // stimulus classes
    int state_index() const override;
    std::vector<float> render_state(int s) const override;  // stimulus image
    std::pair<int, int> state_coords(int s) const override { return {s, 0}; }
    int eval_step_cap() const override { return 4 * kSide; }
    void reseed(uint64_t seed) override { rng_ = Rng(seed); }
    std::unique_ptr<Env> clone() const override { return std::make_unique<CorridorEnv>(*this); }

    int trial_vertical() const { return vertical_; }
    int position() const { return pos_; }

private:
    Rng rng_;
    int pos_ = 0;
    bool vertical_ = true;
    bool terminal_ = true;
};

}  // namespace pxrl
