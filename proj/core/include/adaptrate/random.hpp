#pragma once

#include <cstdint>
#include <random>

namespace adaptrate {

using Rng = std::mt19937_64;

/// Uniform draw in [0, 1) built from the top 53 bits, so results do not
/// depend on the standard library's distribution implementation.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Seed for stream `index` of a study with the given master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t stream = 0);

/// Master seed after applying the ADAPTRATE_SEED environment override.
std::uint64_t master_seed_from_env(std::uint64_t fallback);

}  // namespace adaptrate
