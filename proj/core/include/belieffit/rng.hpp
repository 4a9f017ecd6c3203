#pragma once

#include <cstdint>
#include <random>

namespace belieffit {

using Rng = std::mt19937_64;

/// Named sub-streams. A trial's generators are derived from
/// (master_seed, stream, index) so results never depend on scheduling.
enum class Stream : std::uint64_t {
  World = 1,
  Detection = 2,
  Policy = 3,
  Calibration = 4,
  Dataset = 5,
  TypePrior = 6,
  Shuffle = 7,
  Sensor = 8,
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Counter-based seed derivation: splitmix64 chained over the three words.
std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index = 0) noexcept;

inline Rng make_rng(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
  return Rng(derive_seed(master, stream, index));
}

}  // namespace belieffit
