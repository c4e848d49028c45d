#pragma once

#include <cstdint>
#include <random>

namespace demoe {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream); used so per-record randomness
/// does not depend on processing order.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x44u, 0x4du, 0x4fu, 0x45u};
  return Rng(seq);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double normal(Rng& rng, double mean = 0.0, double sd = 1.0) {
  return std::normal_distribution<double>(mean, sd)(rng);
}

/// Uniform integer in [lo, hi].
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

/// Fisher-Yates with our own index draws, so the permutation depends only on
/// the generator and not on the standard library's shuffle algorithm.
template <class It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = last - first;
  for (auto i = n - 1; i > 0; --i) {
    const auto j = uniform_int(rng, 0, static_cast<std::int64_t>(i));
    std::swap(first[i], first[j]);
  }
}

}  // namespace demoe
