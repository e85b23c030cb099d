#pragma once

#include <cstdint>
#include <random>

namespace qrlink {

using Rng = std::mt19937_64;

// Stream identifiers for derive_seed. Values are part of the reproducibility
// contract; do not renumber.
enum class Stream : std::uint64_t {
  kFrame = 1,
  kRetrieval = 2,
  kMeasurement = 3,
  kSweepPoint = 4,
  kHom = 5,
  kDebugSource = 6,
};

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Splitting rule: seed' = mix64(mix64(seed ^ mix64(stream)) + index).
// Each (seed, stream, index) triple owns an independent mt19937_64.
std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index);

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index) {
  return Rng(derive_seed(seed, stream, index));
}

}  // namespace qrlink
