#pragma once

#include <cstdint>

namespace bk {

// xorshift64* with the 12/25/27 shift triple and the Vigna multiplier
// 0x2545f4914f6cdd1d. The state must never be zero, so a zero seed is
// remapped to a fixed odd constant. Matching these constants reproduces
// every generated input bit for bit.
class Xorshift64Star {
public:
    explicit Xorshift64Star(uint64_t seed)
        : state_(seed != 0 ? seed : 0x9e3779b97f4a7c15ull) {}

    uint64_t next_u64() {
        state_ ^= state_ >> 12;
        state_ ^= state_ << 25;
        state_ ^= state_ >> 27;
        return state_ * 0x2545f4914f6cdd1dull;
    }

    // Uniform in [0, 1) from the top 53 bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [-1, 1).
    double next_symmetric() { return 2.0 * next_unit() - 1.0; }

    // Uniform integer in [0, bound); bound must be positive.
    uint64_t next_below(uint64_t bound) { return next_u64() % bound; }

private:
    uint64_t state_;
};

}  // namespace bk
