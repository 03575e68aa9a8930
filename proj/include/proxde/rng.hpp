#pragma once

#include <cstdint>
#include <cmath>

namespace proxde {

/// Identifies one statistically independent random stream.
///
/// The pair (master, stream) plus a draw index fully determines every
/// variate, independent of evaluation order or thread schedule.
struct RngSeed {
    std::uint64_t master = 0;
    std::uint64_t stream = 0;

    RngSeed with_stream(std::uint64_t s) const { return RngSeed{master, s}; }
};

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// SplitMix64 finalizer (Steele/Lea/Flood; Vigna's fixed-increment variant).
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t stream_origin(const RngSeed& seed) {
    std::uint64_t s = mix64(seed.master + kGolden);
    return mix64(s ^ mix64(seed.stream * 0xBF58476D1CE4E5B9ull + 0x94D049BB133111EBull));
}

} // namespace detail

/// Counter-based generator: word(i) is a pure function of (seed, i).
inline std::uint64_t rng_word(const RngSeed& seed, std::uint64_t index) {
    return detail::mix64(detail::stream_origin(seed) + detail::kGolden * (index + 1));
}

/// Uniform draw in the open interval (0,1).
inline double rng_uniform(const RngSeed& seed, std::uint64_t index) {
    return (static_cast<double>(rng_word(seed, index) >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal draw, Box-Muller on the word pair (2*index, 2*index+1).
/// Fixed two-words-per-variate layout keeps the mapping counter-addressable.
inline double rng_normal(const RngSeed& seed, std::uint64_t index) {
    const double u1 = rng_uniform(seed, 2 * index);
    const double u2 = rng_uniform(seed, 2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

/// Sequential convenience wrapper over the counter-based core.
class Rng {
public:
    explicit Rng(RngSeed seed) : seed_(seed) {}
    Rng(std::uint64_t master, std::uint64_t stream) : seed_{master, stream} {}

    std::uint64_t next_word() { return rng_word(seed_, word_index_++); }
    double uniform() {
        return (static_cast<double>(next_word() >> 11) + 0.5) * 0x1.0p-53;
    }
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }
    const RngSeed& seed() const { return seed_; }

private:
    RngSeed seed_;
    std::uint64_t word_index_ = 0;
};

} // namespace proxde
