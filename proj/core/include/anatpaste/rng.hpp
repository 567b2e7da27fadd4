#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace anatpaste {

/// Seeded random stream. Conversions from raw engine output to reals and
/// bounded integers are done here rather than through <random> distributions,
/// whose output differs between standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    /// Sub-stream for (seed, ids...), e.g. (global seed, image index). Streams
    /// with different id lists are statistically independent.
    static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> ids);
    static std::uint64_t mix(std::uint64_t seed, std::initializer_list<std::uint64_t> ids);

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    /// Uniform in [lo, hi]; returns lo when lo == hi.
    double uniform(double lo, double hi);
    /// Uniform integer in [lo, hi] inclusive, unbiased.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    /// exp(U[log lo, log hi]).
    double log_uniform(double lo, double hi);
    /// Standard normal via Box-Muller.
    double normal();

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace anatpaste
