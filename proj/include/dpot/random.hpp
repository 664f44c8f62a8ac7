#pragma once

#include <cstdint>
#include <random>

namespace dpot {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream). Streams with different indices
/// share no state, so parallel samplers can be seeded without coordination.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x6470u};
  return Rng(seq);
}

}  // namespace dpot
