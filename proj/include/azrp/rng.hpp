#pragma once

#include <cstdint>
#include <random>

namespace azrp {

using Engine = std::mt19937_64;

/// Independent stream for (seed, id). The result depends only on the pair,
/// so trajectory sets do not depend on scheduling order.
inline Engine stream(std::uint64_t seed, std::uint64_t id, std::uint64_t lane = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32),
                      static_cast<std::uint32_t>(lane)};
    return Engine(seq);
}

} // namespace azrp
