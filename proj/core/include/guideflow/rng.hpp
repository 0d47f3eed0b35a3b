#pragma once

#include <cstdint>
#include <random>

namespace guideflow {

using Rng = std::mt19937_64;

// splitmix64, used to decorrelate derived seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Independent stream for item `index` of a run seeded with `seed`.
// Parallel samplers each own one of these, so results do not depend on
// scheduling or thread count.
inline Rng substream(std::uint64_t seed, std::uint64_t index) {
    return Rng(mix64(mix64(seed) ^ mix64(index + 0x51'7c'c1'b7'27'22'0a'95ull)));
}

}  // namespace guideflow
