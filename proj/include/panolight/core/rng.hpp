#pragma once

#include <cstdint>
#include <random>

namespace panolight {

/// Derives an independent stream seed from a base seed and a stream id
/// (splitmix64 finalizer), so per-step / per-item generators do not depend on
/// how many numbers earlier streams consumed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

}  // namespace panolight
