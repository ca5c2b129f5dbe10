#pragma once

#include <array>
#include <vector>

#include "pxrl/env.hpp"
#include "pxrl/networks.hpp"
#include "pxrl/replay.hpp"

namespace pxrl {

// Two-phase transfer: train everything on task A, then freeze the encoder
// (and T) and fine-tune the Q head on task B.
struct GoalTransfer {
    int new_goal_x = 5, new_goal_y = 1;
    int fine_tune_steps = 100;
};

struct TransitionShuffle {
    int fine_tune_steps = 150;
};

// Probe cells and the exposure chain for one preference-swap experiment.
// P1->P2->P3 walks the unit's highest-response cells, N1->N2->N3 its lowest,
// and the buffer links them P1->P2->P3->N3->N2->N1 with the swap between P3
// and N3.
struct SwapProtocol {
    int unit = -1;
    std::array<int, 3> p_states{};  // state indices into the grid env
    std::array<int, 3> n_states{};
    std::vector<Transition> chain;  // exactly 5 transitions, replayed uniformly
};

// Raised when a unit's tuning admits no valid probe paths; callers resample
// another unit.
class ProbeSelectionError : public ContractError {
public:
    using ContractError::ContractError;
};

// Per-state responses of one latent unit under the deterministic state sweep.
std::vector<float> unit_state_responses(const AgentBundle<float>& bundle, const Env& env, int unit);

SwapProtocol build_swap_exposure(const AgentBundle<float>& bundle, const GridEnv& env, int unit);

}  // namespace pxrl
