#pragma once

#include <cstdint>
#include <string_view>

namespace diagsim {

/// FNV-1a 64-bit hash; the project's one deterministic string hash, used for
/// embedding seeds, split shuffles, request fingerprints and per-subtask RNG
/// streams so that runs are reproducible across platforms.
inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Order-sensitive combiner for deriving per-entity RNG streams from a base seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t value) {
    seed ^= value + 0x9e3779b97f4a7c15ull + (seed << 6) + (seed >> 2);
    return seed;
}

}  // namespace diagsim
