#pragma once

#include "repmkt/math_util.hpp"

#include <cstdint>

namespace repmkt {

/// Counter-split SplitMix64 stream. Streams are derived by hashing
/// (seed, stream) so draws for one unit are independent of evaluation order;
/// simulations are bit-identical across thread counts.
class Rng {
public:
    Rng(uint64_t seed, uint64_t stream) : state_(mix(seed ^ 0x9e3779b97f4a7c15ULL, stream)) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform draw in [0, 1).
    double uniform01() { return (next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform draw in (0, 1), safe to feed a quantile function.
    double uniform_open() {
        const double u = uniform01();
        return u > 0.0 ? u : 0x1.0p-53;
    }

    double normal() { return normal_quantile(uniform_open()); }

private:
    static uint64_t mix(uint64_t a, uint64_t b) {
        uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    uint64_t state_;
};

} // namespace repmkt
