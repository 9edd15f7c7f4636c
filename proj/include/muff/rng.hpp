#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace muff {

// Deterministic random stream built on std::mt19937_64, whose output sequence
// is fixed by the C++ standard. Distributions are derived here from raw 64-bit
// words instead of <random> distributions, which are implementation-defined,
// so a seed yields the same stream on every conforming platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of resolution.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, bound), rejection-sampled to avoid modulo bias.
    std::uint64_t below(std::uint64_t bound);

    bool bernoulli(double p) { return uniform() < p; }

    // Fisher-Yates shuffle driven by below().
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // Independent child stream; used to give each experiment cell its own Rng.
    Rng fork(std::uint64_t salt);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace muff
