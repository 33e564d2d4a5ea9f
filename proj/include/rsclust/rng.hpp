#pragma once

#include <cstdint>
#include <random>

namespace rsclust {

using Rng = std::mt19937_64;

/// Engine for (seed, stream). Distinct streams under one seed are seeded
/// through seed_seq and behave as independent generators; this is how
/// parallel chains and replicate runs get their own generators.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), 0x9e3779b9u};
  return Rng(seq);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace rsclust
