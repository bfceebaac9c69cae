#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace slidebench {

/// Portable counter-based generator.
///
/// The i-th output (i = 0, 1, ...) of stream `seed` is
///
///     splitmix64_mix(seed + (i + 1) * 0x9E3779B97F4A7C15)
///
/// where splitmix64_mix is the SplitMix64 output finalizer. Any element can be
/// computed directly with `CounterRng::at(seed, i)`, so parallel consumers can
/// index the stream without sharing state. Floating-point draws use the top 53
/// bits, which makes uniform draws exact and identical on every IEEE-754 host.
class CounterRng {
public:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

    explicit constexpr CounterRng(std::uint64_t seed, std::uint64_t start = 0) noexcept
        : seed_(seed), counter_(start) {}

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static constexpr std::uint64_t at(std::uint64_t seed, std::uint64_t index) noexcept {
        return mix(seed + (index + 1) * kGamma);
    }

    /// Uniform in [0, 1) from element `index`.
    static constexpr double unit_at(std::uint64_t seed, std::uint64_t index) noexcept {
        return static_cast<double>(at(seed, index) >> 11) * 0x1.0p-53;
    }

    constexpr std::uint64_t next_u64() noexcept { return at(seed_, counter_++); }

    constexpr double uniform01() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

    /// Unbiased integer in [0, bound) by rejection.
    constexpr std::uint64_t below(std::uint64_t bound) noexcept {
        if (bound <= 1) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
        std::uint64_t r = next_u64();
        while (r >= limit) r = next_u64();
        return r % bound;
    }

    /// Standard normal via Box-Muller. Relies on libm, so only bit-stable per platform.
    double normal() noexcept {
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_;
};

/// Fisher-Yates shuffle driven by CounterRng; identical on every platform
/// (unlike std::shuffle, whose algorithm is unspecified).
template <typename T>
void portable_shuffle(std::span<T> items, CounterRng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        using std::swap;
        swap(items[i - 1], items[j]);
    }
}

}  // namespace slidebench
