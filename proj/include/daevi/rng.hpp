#pragma once

#include <cmath>
#include <cstdint>

namespace daevi {

// Deterministic 64-bit generator (splitmix64, Steele et al. constants).
// Streams are reproducible bit-for-bit across runs of the same build, which
// every seeded component (init, synthesis, sampling) relies on.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Uniform integer in [0, n). n must be > 0; modulo bias is negligible for
    // the small ranges used here and keeps the stream layout simple.
    std::uint64_t next_below(std::uint64_t n) {
        return next_u64() % n;
    }

    // Box-Muller; one value per call (the spare is discarded so the stream
    // position stays a pure function of call count).
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 < 1e-300) {
            u1 = 1e-300;
        }
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double two_pi = 6.283185307179586476925286766559;
        return mean + stddev * r * std::cos(two_pi * u2);
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

    // Derives an independent stream from (seed, salt) pairs.
    static SplitMix64 derive(std::uint64_t seed, std::uint64_t salt) {
        SplitMix64 mixer(seed ^ (0x632BE59BD9B4E019ULL * (salt + 1)));
        return SplitMix64(mixer.next_u64());
    }

private:
    std::uint64_t state_;
};

} // namespace daevi
