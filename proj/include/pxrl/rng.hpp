#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace pxrl {

// Deterministic, platform-independent randomness. All streams an experiment
// consumes are derived from one master seed hashed with a role tag, so runs
// reproduce byte-exactly from the config alone.

inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// xoshiro256** with explicitly coded distributions; no std:: distribution
// objects are used anywhere so the draw sequence is fixed across platforms.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // [0, n), fixed-point multiply (no rejection; bias ~ n / 2^64)
    int uniform_int(int n) {
        return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                                 static_cast<unsigned __int128>(n)) >> 64);
    }

    double next_double() {  // [0,1), 53 bits
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    float next_float() {  // [0,1), 24 bits
        return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
    }

    float uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }

    bool bernoulli(double p) { return next_double() < p; }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::array<uint64_t, 4> state_{};
};

inline uint64_t derive_seed(uint64_t master, std::string_view role) {
    uint64_t s = master ^ fnv1a64(role);
    return splitmix64(s);
}

inline Rng derive_rng(uint64_t master, std::string_view role) {
    return Rng(derive_seed(master, role));
}

}  // namespace pxrl
