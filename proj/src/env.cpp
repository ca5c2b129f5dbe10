#include "pxrl/env.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace pxrl {

int apply_stochastic_transition(int action, int num_actions, double p, Rng& rng) {
    if (p < 0.0 || p > 1.0) throw ContractError("apply_stochastic_transition: p outside [0,1]");
    if (p == 0.0) return action;
    if (!rng.bernoulli(p)) return action;
    int pick = rng.uniform_int(num_actions - 1);
    return pick >= action ? pick + 1 : pick;
}

// ------------------------------------------------------------- ImageBank --

ImageBank ImageBank::load(const std::string& index_path, int grid_w, int grid_h,
                          int img_w, int img_h) {
    std::ifstream in(index_path);
    if (!in) throw IoError("image bank index not readable: " + index_path);
    std::string base = ".";
    if (auto slash = index_path.find_last_of('/'); slash != std::string::npos)
        base = index_path.substr(0, slash);

    ImageBank bank;
    bank.width = img_w;
    bank.height = img_h;
    bank.images.assign(static_cast<size_t>(grid_w) * grid_h, {});
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        int x = 0, y = 0;
        char fname[512] = {0};
        if (std::sscanf(line.c_str(), "%d,%d,%511s", &x, &y, fname) != 3)
            throw ConfigError("image bank index line " + std::to_string(lineno) + " malformed: " + line);
        if (x < 0 || x >= grid_w || y < 0 || y >= grid_h)
            throw ConfigError("image bank index line " + std::to_string(lineno) + " out of grid");
        std::ifstream img(base + "/" + fname, std::ios::binary);
        if (!img) throw IoError("image bank file not readable: " + std::string(fname));
        const size_t nbytes = static_cast<size_t>(img_w) * img_h * 3;
        std::vector<unsigned char> raw(nbytes);
        img.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(nbytes));
        if (static_cast<size_t>(img.gcount()) != nbytes)
            throw IoError("image bank file truncated: " + std::string(fname));
        // bytes are interleaved RGB row-major; observations are planar [3,H,W]
        std::vector<float> planar(nbytes);
        for (int yy = 0; yy < img_h; ++yy)
            for (int xx = 0; xx < img_w; ++xx)
                for (int c = 0; c < 3; ++c)
                    planar[static_cast<size_t>(c) * img_h * img_w + static_cast<size_t>(yy) * img_w + xx] =
                        raw[(static_cast<size_t>(yy) * img_w + xx) * 3 + c] / 255.0f;
        bank.images[static_cast<size_t>(y) * grid_w + x] = std::move(planar);
    }
    return bank;
}

// --------------------------------------------------------------- GridEnv --

GridEnv::GridEnv(Config cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed) {
    if (cfg_.mode == ObsMode::kImageBank && !cfg_.bank)
        throw ConfigError("GridEnv: image-bank mode requires a loaded bank");
    state_of_cell_.assign(static_cast<size_t>(cfg_.width) * cfg_.height, -1);
    for (int y = 0; y < cfg_.height; ++y)
        for (int x = 0; x < cfg_.width; ++x)
            if (!cfg_.walls.count({x, y})) {
                state_of_cell_[static_cast<size_t>(y) * cfg_.width + x] = static_cast<int>(cells_.size());
                cells_.push_back({x, y});
            }
    if (is_wall(cfg_.goal_x, cfg_.goal_y)) throw ConfigError("GridEnv: goal inside a wall");
    if (cfg_.mode == ObsMode::kShuffled) {
        const int n = cfg_.width * cfg_.height;
        pixel_perm_.resize(n);
        std::iota(pixel_perm_.begin(), pixel_perm_.end(), 0);
        Rng perm_rng(derive_seed(cfg_.seed, "pixel-shuffle"));
        for (int i = n - 1; i > 0; --i)
            std::swap(pixel_perm_[i], pixel_perm_[perm_rng.uniform_int(i + 1)]);
    }
}

bool GridEnv::is_wall(int x, int y) const {
    if (x < 0 || x >= cfg_.width || y < 0 || y >= cfg_.height) return true;
    return state_of_cell_[static_cast<size_t>(y) * cfg_.width + x] < 0;
}

int GridEnv::state_of_cell(int cell) const { return state_of_cell_[static_cast<size_t>(cell)]; }

Shape GridEnv::obs_shape() const {
    if (cfg_.mode == ObsMode::kImageBank) return {3, cfg_.bank->height, cfg_.bank->width};
    return {1, cfg_.height, cfg_.width};
}

std::pair<int, int> GridEnv::move(std::pair<int, int> from, int action) const {
    auto [x, y] = from;
    switch (action) {
        case kLeft: --x; break;
        case kRight: ++x; break;
        case kUp: ++y; break;
        case kDown: --y; break;
        default: throw ContractError("GridEnv: unknown action " + std::to_string(action));
    }
    if (is_wall(x, y)) return from;
    return {x, y};
}

std::vector<float> GridEnv::reset() {
    const int goal_state = state_of_cell_[static_cast<size_t>(cfg_.goal_y) * cfg_.width + cfg_.goal_x];
    int s;
    do {
        s = rng_.uniform_int(static_cast<int>(cells_.size()));
    } while (s == goal_state);
    agent_ = cells_[s];
    terminal_ = false;
    return render_cell(agent_.first, agent_.second);
}

StepResult GridEnv::step(int action) {
    if (terminal_) throw ContractError("GridEnv::step called on a terminal episode");
    const int eff = apply_stochastic_transition(action, 4, cfg_.stochastic_p, rng_);
    std::pair<int, int> next;
    if (relabel_.empty()) {
        next = move(agent_, eff);
    } else {
        const int orig = relabel_inv_[cell_id(agent_.first, agent_.second)];
        auto moved = move({orig % cfg_.width, orig / cfg_.width}, eff);
        const int relabeled = relabel_[cell_id(moved.first, moved.second)];
        next = {relabeled % cfg_.width, relabeled / cfg_.width};
    }
    agent_ = next;
    StepResult r;
    r.reward = 0.0f;
    if (agent_.first == cfg_.goal_x && agent_.second == cfg_.goal_y) {
        r.reward = 1.0f;
        terminal_ = true;
    }
    r.terminal = terminal_;
    r.obs = render_cell(agent_.first, agent_.second);
    return r;
}

int GridEnv::state_index() const {
    return state_of_cell_[static_cast<size_t>(agent_.second) * cfg_.width + agent_.first];
}

std::vector<float> GridEnv::render_cell(int x, int y) const {
    switch (cfg_.mode) {
        case ObsMode::kPlain: {
            std::vector<float> img(static_cast<size_t>(cfg_.width) * cfg_.height, 0.0f);
            img[static_cast<size_t>(y) * cfg_.width + x] = 1.0f;
            return img;
        }
        case ObsMode::kShuffled: {
            std::vector<float> img(static_cast<size_t>(cfg_.width) * cfg_.height, 0.0f);
            img[static_cast<size_t>(pixel_perm_[static_cast<size_t>(y) * cfg_.width + x])] = 1.0f;
            return img;
        }
        case ObsMode::kImageBank: {
            const auto& img = cfg_.bank->images[static_cast<size_t>(y) * cfg_.width + x];
            if (img.empty())
                throw ConfigError("image bank has no image for state (" + std::to_string(x) + "," +
                                  std::to_string(y) + ")");
            return img;
        }
    }
    throw ContractError("GridEnv: bad mode");
}

std::vector<float> GridEnv::render_state(int s) const {
    return render_cell(cells_[s].first, cells_[s].second);
}

const std::vector<float>& GridEnv::pixel_permutation_image(int) const {
    throw ContractError("unused");
}

void GridEnv::set_goal(int x, int y) {
    if (is_wall(x, y)) throw ContractError("set_goal: target cell is a wall");
    cfg_.goal_x = x;
    cfg_.goal_y = y;
}

void GridEnv::set_relabel(std::vector<int> perm) {
    const size_t n = static_cast<size_t>(cfg_.width) * cfg_.height;
    if (perm.size() != n) throw ContractError("set_relabel: permutation size mismatch");
    std::vector<int> inv(n, -1);
    for (size_t i = 0; i < n; ++i) {
        if (perm[i] < 0 || static_cast<size_t>(perm[i]) >= n || inv[perm[i]] != -1)
            throw ContractError("set_relabel: not a permutation");
        inv[perm[i]] = static_cast<int>(i);
    }
    const int goal = cell_id(cfg_.goal_x, cfg_.goal_y);
    if (perm[goal] != goal) throw ContractError("set_relabel: permutation must fix the goal cell");
    relabel_ = std::move(perm);
    relabel_inv_ = std::move(inv);
}

std::vector<int> make_goal_fixing_permutation(const GridEnv& env, Rng& rng) {
    auto [gx, gy] = env.goal();
    const int goal = env.cell_id(gx, gy);
    auto shape = env.obs_shape();
    const int n = env.num_states();  // open arena: every cell is a state
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
    // restore the goal fixed point
    for (int j = 0; j < n; ++j)
        if (perm[j] == goal) {
            std::swap(perm[j], perm[goal]);
            break;
        }
    (void)shape;
    return perm;
}

// ------------------------------------------------------ CircularTrackEnv --

std::vector<std::pair<int, int>> CircularTrackEnv::ring_cells() {
    std::vector<std::pair<int, int>> ring;
    for (int x = 0; x < kSide; ++x) ring.push_back({x, 0});
    for (int y = 1; y < kSide; ++y) ring.push_back({kSide - 1, y});
    for (int x = kSide - 2; x >= 0; --x) ring.push_back({x, kSide - 1});
    for (int y = kSide - 2; y >= 1; --y) ring.push_back({0, y});
    return ring;
}

CircularTrackEnv::CircularTrackEnv(uint64_t seed, int reward_state)
    : rng_(seed), ring_(ring_cells()) {
    if (reward_state >= 0)
        reward_state_ = reward_state % static_cast<int>(ring_.size());
    else
        reward_state_ = rng_.uniform_int(static_cast<int>(ring_.size()));
}

std::vector<float> CircularTrackEnv::reset() {
    do {
        pos_ = rng_.uniform_int(static_cast<int>(ring_.size()));
    } while (pos_ == reward_state_);
    terminal_ = false;
    return render_state(pos_);
}

StepResult CircularTrackEnv::step(int action) {
    if (terminal_) throw ContractError("CircularTrackEnv::step called on a terminal episode");
    const int n = static_cast<int>(ring_.size());
    const bool clockwise = action == kActClockwise;
    pos_ = clockwise ? (pos_ + 1) % n : (pos_ + n - 1) % n;
    StepResult r;
    if (pos_ == reward_state_ && clockwise) {
        r.reward = 1.0f;
        terminal_ = true;
    }
    r.terminal = terminal_;
    r.obs = render_state(pos_);
    return r;
}

std::vector<float> CircularTrackEnv::render_state(int s) const {
    std::vector<float> img(static_cast<size_t>(kSide) * kSide, 0.0f);
    auto [x, y] = ring_[s];
    img[static_cast<size_t>(y) * kSide + x] = 1.0f;
    return img;
}

// ----------------------------------------------------------- AltTMazeEnv --

AltTMazeEnv::AltTMazeEnv(uint64_t seed, bool memory) : rng_(seed), memory_(memory) {}

bool AltTMazeEnv::blocked(int x, int y) const {
    if (x < 0 || x >= kSide || y < 0 || y >= kSide) return true;
    if (y == kSide - 1) {
        // wrong arm is barred for the whole trial
        if (trial_type_ == 0 && x > 2) return true;
        if (trial_type_ == 1 && x < 2) return true;
    }
    return false;
}

std::vector<float> AltTMazeEnv::reset() {
    trial_type_ = 1 - trial_type_;
    // enter from the corner below the previously rewarded arm
    agent_ = trial_type_ == 0 ? std::pair<int, int>{kSide - 1, 0} : std::pair<int, int>{0, 0};
    terminal_ = false;
    decision_rewarded_ = false;
    trace_.clear();  // trace buffer resets at trial start
    push_frame(agent_);
    return current_observation();
}

StepResult AltTMazeEnv::step(int action) {
    if (terminal_) throw ContractError("AltTMazeEnv::step called on a terminal episode");
    auto [x, y] = agent_;
    switch (action) {
        case kLeft: --x; break;
        case kRight: ++x; break;
        case kUp: ++y; break;
        case kDown: --y; break;
        default: throw ContractError("AltTMazeEnv: unknown action " + std::to_string(action));
    }
    if (!blocked(x, y)) agent_ = {x, y};
    StepResult r;
    if (agent_ == std::pair<int, int>{2, kSide - 1} && !decision_rewarded_) {
        r.reward = 1.0f;
        decision_rewarded_ = true;
    }
    const std::pair<int, int> arm_end =
        trial_type_ == 0 ? std::pair<int, int>{0, kSide - 1} : std::pair<int, int>{kSide - 1, kSide - 1};
    if (agent_ == arm_end) {
        r.reward = 1.0f;
        terminal_ = true;
    }
    r.terminal = terminal_;
    push_frame(agent_);
    r.obs = current_observation();
    return r;
}

void AltTMazeEnv::push_frame(std::pair<int, int> cell) {
    trace_.insert(trace_.begin(), cell);
    if (trace_.size() > kTraceLen) trace_.resize(kTraceLen);
}

std::vector<float> AltTMazeEnv::current_observation() const {
    std::vector<float> img(static_cast<size_t>(kSide) * kSide, 0.0f);
    if (!memory_) {
        img[static_cast<size_t>(trace_[0].second) * kSide + trace_[0].first] = 1.0f;
        return img;
    }
    float w = 1.0f;
    for (const auto& cell : trace_) {
        img[static_cast<size_t>(cell.second) * kSide + cell.first] += w;
        w *= kTraceAlpha;
    }
    return img;
}

std::vector<float> AltTMazeEnv::render_state(int s) const {
    std::vector<float> img(static_cast<size_t>(kSide) * kSide, 0.0f);
    img[static_cast<size_t>(s)] = 1.0f;
    return img;
}

std::vector<std::pair<std::pair<int, int>, int>> AltTMazeEnv::canonical_trial_path(int trial_type) {
    std::vector<std::pair<std::pair<int, int>, int>> path;
    const int start_x = trial_type == 0 ? kSide - 1 : 0;
    const int toward_stem = trial_type == 0 ? kLeft : kRight;
    int x = start_x;
    while (x != 2) {
        path.push_back({{x, 0}, toward_stem});
        x += trial_type == 0 ? -1 : 1;
    }
    for (int y = 0; y < kSide - 1; ++y) path.push_back({{2, y}, kUp});
    const int turn = trial_type == 0 ? kLeft : kRight;
    int ax = 2;
    while (ax != (trial_type == 0 ? 0 : kSide - 1)) {
        path.push_back({{ax, kSide - 1}, turn});
        ax += trial_type == 0 ? -1 : 1;
    }
    return path;
}

// ----------------------------------------------------------- CorridorEnv --

CorridorEnv::CorridorEnv(uint64_t seed) : rng_(seed) {}

std::vector<float> CorridorEnv::reset() {
    pos_ = 0;
    vertical_ = rng_.bernoulli(0.5);
    terminal_ = false;
    return render_state(kStimApproach);
}

int CorridorEnv::state_index() const {
    if (pos_ < kApproach) return kStimApproach;
    return vertical_ ? kStimVertical : kStimAngled;
}

StepResult CorridorEnv::step(int action) {
    if (terminal_) throw ContractError("CorridorEnv::step called on a terminal episode");
    if (action != 0 && action != 1) throw ContractError("CorridorEnv: unknown action");
    StepResult r;
    if (action == 0) {
        ++pos_;
        if (pos_ >= kApproach + kCorridor) {
            terminal_ = true;
            r.reward = vertical_ ? 1.0f : 0.0f;
        }
    }
    r.terminal = terminal_;
    r.obs = render_state(terminal_ ? (vertical_ ? kStimVertical : kStimAngled) : state_index());
    return r;
}

std::vector<float> CorridorEnv::render_state(int s) const {
    std::vector<float> img(static_cast<size_t>(kSide) * kSide, 0.0f);
    switch (s) {
        case kStimApproach:
            std::fill(img.begin(), img.end(), 0.5f);
            break;
        case kStimVertical:
            for (int y = 0; y < kSide; ++y)
                for (int x = 0; x < kSide; ++x)
                    if (x % 2 == 0) img[static_cast<size_t>(y) * kSide + x] = 1.0f;
            break;
        case kStimAngled:
            for (int y = 0; y < kSide; ++y)
                for (int x = 0; x < kSide; ++x)
                    if ((x + y) % 2 == 0) img[static_cast<size_t>(y) * kSide + x] = 1.0f;
            break;
        default:
            throw ContractError("CorridorEnv: unknown stimulus " + std::to_string(s));
    }
    return img;
}

}  // namespace pxrl
