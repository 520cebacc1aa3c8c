#pragma once

#include <cstdint>
#include <random>

namespace apsc {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used only to derive independent engine seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed for the `index`-th draw sequence of logical stream `stream` under `base`.
/// Streams are addressed, not advanced, so any consumer can reproduce any
/// rollout without replaying its predecessors.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                    std::uint64_t index) noexcept {
    return mix64(mix64(mix64(base) ^ stream) ^ (index * 0xd1b54a32d192ed03ULL));
}

inline Rng make_rng(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
    return Rng(derive_seed(base, stream, index));
}

inline double standard_normal(Rng& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    return n01(rng);
}

// Well-known stream ids. Keeping them distinct avoids accidental correlation
// between, e.g., plant noise and Monte Carlo rollouts.
namespace streams {
inline constexpr std::uint64_t kPlant = 1;
inline constexpr std::uint64_t kMeasurement = 2;
inline constexpr std::uint64_t kRollout = 3;
inline constexpr std::uint64_t kPropagation = 4;
inline constexpr std::uint64_t kScenario = 5;
inline constexpr std::uint64_t kControlStep = 6;
}  // namespace streams

}  // namespace apsc
