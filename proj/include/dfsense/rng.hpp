#pragma once

#include "dfsense/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

namespace dfsense {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

/// Independent generator for (seed, stream); the same pair always yields the
/// same sequence regardless of how many other streams were drawn.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  return Rng(derive_seed(seed, stream));
}

/// Uniform(-a, a) with a = 1/sqrt(fan_in).
inline void init_uniform(Matrix& m, Index fan_in, Rng& rng) {
  const double a = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
  std::uniform_real_distribution<double> u(-a, a);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
}

}  // namespace dfsense
