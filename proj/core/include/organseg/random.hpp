#pragma once

#include <cstdint>
#include <random>

namespace organseg {

// SplitMix64 finalizer, used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Seed of stream `index` under `seed`: splitmix64(seed + 0x9E3779B97F4A7C15 * (index + 1)).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept;

// Reproducible random source. The engine is std::mt19937_64, whose output sequence is fixed by
// the C++ standard; the derived distributions below are implemented here rather than taken from
// <random> (whose distributions are implementation-defined) so streams match across toolchains.
//
//   uniform()  = (next_u64() >> 11) * 2^-53                       in [0, 1)
//   normal()   = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)                Box-Muller, one draw per call
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    // Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n);

private:
    std::mt19937_64 engine_;
};

}  // namespace organseg
