#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace emotrig {

/// 64-bit FNV-1a over raw bytes.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// SplitMix64 (Steele, Lea, Flood 2014). The only generator used for anything
/// that must reproduce across languages: index selection, splits, trigger
/// positions, rewriter choices and t-SNE initialisation.
///
///   state += 0x9E3779B97F4A7C15
///   z = state
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    constexpr std::uint64_t operator()() noexcept { return next(); }
    static constexpr std::uint64_t min() noexcept { return 0; }
    static constexpr std::uint64_t max() noexcept { return ~std::uint64_t{0}; }

    /// Uniform integer in [0, bound) by rejection: draws below (2^64 - bound) % bound
    /// are discarded so every residue is equally likely.
    constexpr std::uint64_t below(std::uint64_t bound) noexcept {
        if (bound <= 1) return 0;
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    /// Uniform double in [0, 1) from the top 53 bits.
    constexpr double uniform() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller (cosine branch only, one draw per call pair).
    double normal() noexcept {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

/// Per-purpose seed: first SplitMix64 output seeded with seed ^ fnv1a64(purpose).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose) noexcept {
    SplitMix64 g(seed ^ fnv1a64(purpose));
    return g.next();
}

/// Per-record seed: first SplitMix64 output seeded with seed ^ (id * golden-ratio constant).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t id) noexcept {
    SplitMix64 g(seed ^ (id * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL));
    return g.next();
}

} // namespace emotrig
