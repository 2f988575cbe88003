#pragma once

#include <array>
#include <cstdint>

namespace verinf::detcore {

// Cross-platform deterministic generator: xoshiro256++ seeded through
// splitmix64. Pure integer arithmetic, so the k-th output for a given seed
// is identical on every platform. State is passed and returned by value;
// there is no hidden global stream.
//
// Constants:
//   splitmix64 increment  0x9E3779B97F4A7C15
//   splitmix64 mixers     0xBF58476D1CE4E5B9, 0x94D049BB133111EB
//   xoshiro256++ rotations 23/45, shift 17

inline uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// One-shot mix of two words into a fresh seed; used to derive independent
// substreams, e.g. per-trial or per-actor seeds.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t x = a ^ (0x9E3779B97F4A7C15ULL + (b << 6) + (b >> 2));
    uint64_t s = x;
    return splitmix64(s);
}

class PrngState {
public:
    PrngState() : s_{1, 2, 3, 4} {}

    static PrngState seeded(uint64_t seed) {
        PrngState p;
        uint64_t x = seed;
        for (auto& w : p.s_) w = splitmix64(x);
        // the all-zero state is invalid for xoshiro256++
        if ((p.s_[0] | p.s_[1] | p.s_[2] | p.s_[3]) == 0) p.s_[0] = 0x9E3779B97F4A7C15ULL;
        return p;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0,1) with a full 24-bit mantissa; one generator step.
    float next_unit_f32() {
        return float(next_u64() >> 40) * 0x1.0p-24f;
    }

    // Uniform in [-1,1); one generator step.
    float next_symmetric_f32() {
        return float(next_u64() >> 40) * 0x1.0p-23f - 1.0f;
    }

    // Unbiased uniform integer in [0, bound); bound > 0. Rejection sampling,
    // so the number of steps consumed varies but is a pure function of the
    // state sequence.
    uint64_t next_below(uint64_t bound) {
        const uint64_t limit = bound * ((~uint64_t{0}) / bound);
        for (;;) {
            uint64_t x = next_u64();
            if (x < limit) return x % bound;
        }
    }

    const std::array<uint64_t, 4>& state() const { return s_; }

    friend bool operator==(const PrngState&, const PrngState&) = default;

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<uint64_t, 4> s_;
};

}  // namespace verinf::detcore
