#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "tlora/matrix.hpp"

namespace tlora {

// xoshiro256++ with splitmix64 seed expansion. Chosen over std::mt19937 so
// that checkpoints, sample CSVs and tests are bit-reproducible across
// platforms and standard libraries.
//
// Seeding scheme: the four state words are the first four outputs of
// splitmix64 initialized with the user seed. Derived streams (per sampling
// chain, per adapter layer, ...) come from seed_for_stream below.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) word = splitmix64(x);
        has_spare_ = false;
        spare_ = 0.0;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in (0, 1]: 53 mantissa bits, never exactly zero.
    double uniform() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    // Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    // Standard normal via Box-Muller (explicit formula keeps the stream
    // identical everywhere; std::normal_distribution is not portable).
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_[4];
    bool has_spare_;
    double spare_;

    friend std::uint64_t seed_for_stream(std::uint64_t seed, std::uint64_t stream);
};

// Derives an independent sub-seed for stream index `stream`. Two mixing
// rounds keep nearby (seed, stream) pairs decorrelated.
inline std::uint64_t seed_for_stream(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t x = seed ^ (stream * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL);
    std::uint64_t a = Rng::splitmix64(x);
    return Rng::splitmix64(x) ^ a;
}

// n×m matrix of i.i.d. N(0, variance) entries, row-major fill order.
// A pure function of (n, m, variance, seed).
Matrix random_gaussian(std::size_t n, std::size_t m, double variance, std::uint64_t seed);

}  // namespace tlora
