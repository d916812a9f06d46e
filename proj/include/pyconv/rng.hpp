#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace pyconv::rng {

// Counter-based generator: every draw is a hash of (seed, stream, counter).
// Nothing is carried between calls, which keeps parallel fills reproducible.

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// Uniform in the open interval (0, 1).
inline double uniform(std::uint64_t seed, std::uint64_t counter) {
  const std::uint64_t bits = splitmix64(seed + splitmix64(counter)) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on two consecutive counters.
inline double normal(std::uint64_t seed, std::uint64_t counter) {
  const double u1 = uniform(seed, 2 * counter);
  const double u2 = uniform(seed, 2 * counter + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace pyconv::rng
