#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rsan/errors.hpp"

namespace rsan {

// Deterministic random source. Wraps std::mt19937_64 (whose output sequence
// is fixed by the standard) and implements its own variate transforms, so a
// given seed produces identical streams on every compiler and platform.
// std::uniform_int_distribution and friends are implementation-defined and
// are deliberately not used.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Unbiased integer in [0, bound) by rejection.
    std::uint64_t uniform_index(std::uint64_t bound) {
        if (bound == 0) throw UsageError("uniform_index bound must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % bound;
    }

    // Uniform in [0, 1) with 53 random mantissa bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller. Consumes exactly two engine outputs and
    // returns one variate, so the stream position never depends on call
    // history.
    double normal() {
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Partial Fisher-Yates: k distinct indices from [0, n), order random.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        if (k > n) throw UsageError("cannot sample " + std::to_string(k) +
                                    " distinct items from " + std::to_string(n));
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(uniform_index(n - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

    // Independent child stream keyed by a tag. splitmix64-style mixing of
    // (seed, tag) decouples the randomness of unrelated pipeline stages:
    // consuming values here never shifts a sibling stream.
    Rng fork(std::uint64_t tag) const {
        std::uint64_t z = seed_ + (tag + 1) * 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        z = z ^ (z >> 31);
        return Rng(z);
    }

    std::uint64_t seed() const { return seed_; }

    // Text form: "<seed> <engine state>". The mt19937_64 stream format is
    // defined by the standard, so this round-trips across platforms.
    std::string serialize() const {
        std::ostringstream os;
        os << seed_ << ' ' << engine_;
        return os.str();
    }

    void deserialize(const std::string& state) {
        std::istringstream is(state);
        is >> seed_ >> engine_;
        if (!is) throw DataError("malformed RNG state string");
    }

    bool operator==(const Rng& other) const { return serialize() == other.serialize(); }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace rsan
