#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace medtransport {

using Rng = std::mt19937_64;

/// Mixes a master seed with a task index into an independent stream seed.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double logistic(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) noexcept { return std::log(p / (1.0 - p)); }

}  // namespace medtransport
