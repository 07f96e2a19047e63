#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace curricuweb {

// SplitMix64 stream with explicit splitting. Distributions are implemented
// here rather than through <random> so sequences are identical across
// standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n);

    // Standard normal via Box-Muller (no cached second value).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Independent child stream keyed by a tag; does not advance this stream.
    Rng split(std::uint64_t tag) const;
    Rng split(std::string_view tag) const;

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            using std::swap;
            swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t state_;
};

std::uint64_t mix64(std::uint64_t x);

// FNV-1a, 64 bit.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace curricuweb
