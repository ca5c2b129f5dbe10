#pragma once

#include <vector>

#include "pxrl/common.hpp"
#include "pxrl/rng.hpp"

namespace pxrl {

// One replayed experience. action_next is meaningful whenever terminal is
// false (the bootstrapped positive-loss target needs it). z_prev carries the
// recurrent state at time t for recurrent runs and is empty otherwise.
struct Transition {
    std::vector<float> obs;
    int action = 0;
    float reward = 0.0f;
    std::vector<float> obs_next;
    int action_next = 0;
    bool terminal = false;
    std::vector<float> z_prev;
};

// Bounded ring with uniform with-replacement sampling.
class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw ContractError("ReplayBuffer: capacity must be positive");
    }

    void push(Transition t) {
        if (items_.size() < capacity_) {
            items_.push_back(std::move(t));
        } else {
            items_[head_] = std::move(t);
            head_ = (head_ + 1) % capacity_;
        }
    }

    size_t size() const { return items_.size(); }
    size_t capacity() const { return capacity_; }
    bool empty() const { return items_.empty(); }
    void clear() {
        items_.clear();
        head_ = 0;
    }

    const Transition& at(size_t i) const { return items_[i]; }

    const Transition& sample(Rng& rng) const {
        if (items_.empty()) throw ContractError("ReplayBuffer: sampling from an empty buffer");
        return items_[rng.uniform_int(static_cast<int>(items_.size()))];
    }

    int sample_index(Rng& rng) const {
        if (items_.empty()) throw ContractError("ReplayBuffer: sampling from an empty buffer");
        return rng.uniform_int(static_cast<int>(items_.size()));
    }

private:
    size_t capacity_;
    size_t head_ = 0;
    std::vector<Transition> items_;
};

}  // namespace pxrl
