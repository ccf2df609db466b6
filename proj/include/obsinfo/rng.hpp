#pragma once

#include <cstdint>
#include <random>

namespace obsinfo {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent stream seeds from a key.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Stream keyed by (master seed, replication, point index). Distinct keys give
// statistically independent streams; equal keys give identical streams, which
// is what common-random-number comparisons across methods rely on.
inline Rng make_stream(std::uint64_t seed, std::uint64_t replication, std::uint64_t point) {
    std::uint64_t key = mix64(seed);
    key = mix64(key ^ replication);
    key = mix64(key ^ (point + 0x632be59bd9b4e019ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32),
                      static_cast<std::uint32_t>(replication), static_cast<std::uint32_t>(point)};
    return Rng(seq);
}

}  // namespace obsinfo
