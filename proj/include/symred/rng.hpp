#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace symred {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

// SplitMix64 stream. The whole state is one 64-bit word, so a stream is
// reproducible from (master_seed, path_index) alone.
struct RngStream {
  std::uint64_t state = 0;

  std::uint64_t next_u64() {
    state += kGoldenGamma;
    std::uint64_t z = state;
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  // 53-bit uniform in [0, 1).
  double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
};

inline RngStream derive_stream(std::uint64_t master_seed, std::uint64_t path_index) {
  RngStream s{master_seed + (path_index + 1) * kGoldenGamma};
  s.next_u64();
  return s;
}

// Stream used for path `path_index` of an ensemble. derive_stream places
// index k+1 exactly one draw ahead of index k on the same SplitMix64 orbit, so
// its streams overlap; re-seeding from the first (hashed) output scatters the
// starting points over the orbit.
inline RngStream path_stream(std::uint64_t master_seed, std::uint64_t path_index) {
  RngStream s = derive_stream(master_seed, path_index);
  return RngStream{s.next_u64()};
}

// Box-Muller on two fresh uniforms; the sine branch is discarded so the
// stream carries no cached value.
inline double next_gaussian(RngStream& stream) {
  const double u1 = 1.0 - stream.next_uniform();  // (0, 1]
  const double u2 = stream.next_uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace symred
