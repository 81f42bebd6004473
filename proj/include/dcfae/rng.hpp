#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dcfae {

// Random streams are keyed by a tuple of integers (seed, purpose, epoch,
// batch, ...) so that any consumer can reconstruct the exact stream it needs
// without sharing generator state.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243F6A8885A308D3ull;
  for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::initializer_list<std::uint64_t> parts) { return Rng(stream_key(parts)); }

/// Purposes used as the second element of a stream key.
enum class Stream : std::uint64_t {
  kInit = 1,
  kShuffle = 2,
  kAugment = 3,
  kNoise = 4,
  kDropout = 5,
  kKMeans = 6,
  kSample = 7,
};

inline std::uint64_t to_key(Stream s) { return static_cast<std::uint64_t>(s); }

}  // namespace dcfae
