#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "snp/errors.hpp"

namespace snp {

// Deterministic 64-bit random stream: xoshiro256** seeded through splitmix64.
// Every random draw in the project flows through this class so that suites,
// checkpoints and trajectories are reproducible from a single root seed.
// Normal deviates use the Irwin-Hall sum of 12 uniforms; the whole stream is
// plain arithmetic (no libm transcendentals), so generated fixtures are
// byte-identical across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& s : state_) s = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Unbiased integer in [0, bound).
    std::uint64_t next_below(std::uint64_t bound) {
        if (bound == 0) throw ValueError("Rng::next_below: bound must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % bound;
    }

    // Approximate standard normal: Irwin-Hall(12) - 6. Mean 0, variance 1.
    double next_normal() {
        double acc = 0.0;
        for (int i = 0; i < 12; ++i) acc += next_double();
        return acc - 6.0;
    }

    // k distinct indices from [0, n), in ascending order.
    std::vector<int> sample_indices(int n, int k) {
        if (k < 0 || k > n) throw ValueError("Rng::sample_indices: k out of range");
        std::vector<int> pool(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
        for (int i = 0; i < k; ++i) {
            const int j = i + static_cast<int>(next_below(static_cast<std::uint64_t>(n - i)));
            std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
        }
        std::vector<int> out(pool.begin(), pool.begin() + k);
        std::sort(out.begin(), out.end());
        return out;
    }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4];
};

// Named sub-streams. All randomness splits from one root seed so each
// subsystem can be perturbed independently.
namespace seeds {

enum Stream : std::uint64_t {
    kModelInit = 1,
    kTaskGen = 2,
    kEpisode = 3,
    kDrift = 4,
    kExpand = 5,
    kModeSwitch = 6,
    kEval = 7,
};

// Stable seed derivation: mixes `salt` into `seed` with two splitmix64 steps.
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t x = seed ^ (0x9E3779B97F4A7C15ULL * (salt + 1));
    Rng::splitmix64(x);
    return Rng::splitmix64(x);
}

inline std::uint64_t derive(std::uint64_t seed, std::uint64_t salt, std::uint64_t index) {
    return derive(derive(seed, salt), index);
}

}  // namespace seeds
}  // namespace snp
