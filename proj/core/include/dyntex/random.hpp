#pragma once

#include <cstdint>

namespace dyntex {

/// SplitMix64 finalizer applied to (seed, counter). Stateless: the n-th draw
/// of a stream depends only on the seed and n.
std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t counter) noexcept;

/// Uniform double in the open interval (0, 1) from the top 53 bits.
double counter_uniform(std::uint64_t seed, std::uint64_t counter) noexcept;

/// Standard normal draw for element `index`. Elements 2k and 2k+1 are the
/// cosine and sine halves of one Box-Muller pair built from uniforms at
/// counters 2k and 2k+1.
double counter_normal(std::uint64_t seed, std::uint64_t index) noexcept;

}  // namespace dyntex
