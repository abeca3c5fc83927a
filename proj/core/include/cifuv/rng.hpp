#pragma once

#include <cstdint>

namespace cifuv {

// splitmix64 (Steele/Lea/Flood). Chosen for the simulators because its output
// is identical on every platform for a given seed, unlike the standard
// library distributions. Streams for independent rounds/nodes are derived
// with stream_seed(), so parallel execution cannot change results.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Unbiased uniform integer in [0, bound), bound >= 1 (rejection sampling).
    std::uint64_t next_below(std::uint64_t bound) {
        if (bound <= 1) return 0;
        std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            std::uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    // Inclusive range [lo, hi].
    std::int64_t next_in_range(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(
                        next_below(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    bool bernoulli(double p) { return next_double() < p; }

    // Stateless scramble of one 64-bit value (splitmix64 finalizer).
    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    // Deterministic sub-stream seed for (seed, index), used to make rounds
    // and nodes independent of execution order.
    static std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
        return mix(seed ^ mix(index + 0x9e3779b97f4a7c15ull));
    }

private:
    std::uint64_t state_;
};

} // namespace cifuv
