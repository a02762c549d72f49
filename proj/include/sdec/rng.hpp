#pragma once

#include <cstdint>
#include <random>

namespace sdec {

using Rng = std::mt19937_64;

/// SplitMix64 step; used to derive independent substreams from one seed.
inline std::uint64_t split_mix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic substream: same (seed, stream) always yields the same engine.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t x = seed ^ (0xd1b54a32d192ed03ULL * (stream + 1));
    std::uint64_t s = split_mix64(x);
    return Rng(s);
}

}  // namespace sdec
