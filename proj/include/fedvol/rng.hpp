#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <string_view>
#include <vector>

namespace fedvol {

// All randomness in the project flows through this generator so that runs are
// bit-reproducible: the engine is splitmix64 and normal deviates use the
// classic Box-Muller transform, both fixed algorithms independent of the
// standard library's unspecified distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal deviate; consumes exactly two engine draws.
    double normal() {
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform integer in [0, n). n must be positive.
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    /// In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

namespace seeds {

inline std::uint64_t scramble(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Deterministic seed derivation: folds each component into the base seed with
/// the splitmix64 finalizer. Used to decorrelate per-client / per-round streams.
inline std::uint64_t derive(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = scramble(base);
    for (std::uint64_t p : parts) h = scramble(h ^ p);
    return h;
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

// Stream tags keep unrelated consumers of the same base seed decorrelated.
enum Stream : std::uint64_t {
    kInit = 1,      // model weight initialization
    kEpoch = 2,     // per-client, per-round, per-epoch shuffling
    kPartition = 3, // IID partitioner
    kDpNoise = 4,   // Gaussian mechanism
    kMarket = 5,    // synthetic market generation
    kScratch = 6,   // from-scratch transfer baseline init
    kGradCheck = 7, // gradient verification batches
};

inline std::uint64_t for_epoch(std::uint64_t base, int client_id, int round, int epoch) {
    return derive(base, {kEpoch, static_cast<std::uint64_t>(client_id),
                         static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(epoch)});
}

inline std::uint64_t for_dp(std::uint64_t dp_seed, int client_id, int round) {
    return derive(dp_seed, {kDpNoise, static_cast<std::uint64_t>(client_id),
                            static_cast<std::uint64_t>(round)});
}

inline std::uint64_t for_market(std::uint64_t base, std::string_view market_id) {
    return derive(base, {kMarket, fnv1a(market_id)});
}

} // namespace seeds
} // namespace fedvol
