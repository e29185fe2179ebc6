#include "dyntex/random.hpp"

#include <cmath>
#include <numbers>

namespace dyntex {

std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t counter) noexcept {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + counter + 0x632BE59BD9B4E019ULL;
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double counter_uniform(std::uint64_t seed, std::uint64_t counter) noexcept {
  // (k + 0.5) / 2^53 keeps the draw away from 0 so log() below is finite.
  const std::uint64_t bits = counter_hash(seed, counter) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double counter_normal(std::uint64_t seed, std::uint64_t index) noexcept {
  const std::uint64_t pair = index & ~std::uint64_t{1};
  const double u1 = counter_uniform(seed, pair);
  const double u2 = counter_uniform(seed, pair + 1);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return (index & 1U) ? radius * std::sin(angle) : radius * std::cos(angle);
}

}  // namespace dyntex
