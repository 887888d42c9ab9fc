#pragma once

#include <cstdint>
#include <random>

namespace lexrl {

/// Random source used everywhere. Each learner or sampler owns its own instance.
using Rng = std::mt19937_64;

// The helpers below fix the mapping from raw engine output to variates so that
// results do not depend on the standard library's distribution implementations.

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n). Requires n > 0.
std::int64_t uniform_index(Rng& rng, std::int64_t n);

/// Standard normal variate (Box-Muller, one draw per call, no cached state).
double standard_normal(Rng& rng);

/// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix64(std::uint64_t x);

/// Child seed for the given master seed and a pair of stream coordinates.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

}  // namespace lexrl
