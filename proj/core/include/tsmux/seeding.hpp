#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tsmux {

/// splitmix64 finaliser.
[[nodiscard]] std::uint64_t mix64(std::uint64_t x);

/// Counter-based seed for trajectory `index` of table `stream` under `master`.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

/// Stable 64-bit id for a string label (FNV-1a).
[[nodiscard]] std::uint64_t label_id(std::string_view label);

/// Uniform double in the open interval (0, 1) from 53 random bits.
[[nodiscard]] inline double open_unit(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace tsmux
