#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace sharplab {

// Counter-based 64-bit generator (splitmix64 stream). All randomness in the
// library flows through this type so runs are bitwise reproducible across
// platforms; std::normal_distribution and friends are implementation-defined
// and must not be used anywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(mix(0x9E3779B97F4A7C15ULL, seed)) {}

    // Independent stream addressed by a path of components, e.g.
    // {model_id, batch_id, repetition}. Same (seed, path) -> same stream.
    Rng substream(std::initializer_list<std::uint64_t> path) const {
        std::uint64_t s = state_;
        for (std::uint64_t c : path) s = mix(s, c);
        return Rng(FromState{}, s);
    }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double log_uniform(double lo, double hi) {
        return std::exp(uniform(std::log(lo), std::log(hi)));
    }

    // Box-Muller, cosine branch only: two u64 draws per variate, no cached
    // state, so substream arithmetic stays position-independent.
    double normal() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    // +1 or -1
    double rademacher() { return (next_u64() & 1u) ? 1.0 : -1.0; }

    std::uint64_t index(std::uint64_t n) { return next_u64() % n; }

private:
    struct FromState {};
    Rng(FromState, std::uint64_t s) : state_(s) {}

    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t z = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

}  // namespace sharplab
