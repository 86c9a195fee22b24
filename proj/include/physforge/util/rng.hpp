#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace physforge {

// mt19937_64 output is pinned by the standard; std:: distributions are not,
// so everything downstream of a seed goes through these helpers to keep
// shuffles and draws byte-identical across platforms.

/// Uniform draw in [0, n), n > 0, by rejection sampling.
std::uint64_t bounded_u64(std::mt19937_64& rng, std::uint64_t n);

/// Uniform double in [0, 1) with 53 bits of entropy.
double unit_real(std::mt19937_64& rng);

/// Fisher-Yates shuffle driven by bounded_u64.
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j =
        static_cast<std::size_t>(bounded_u64(rng, static_cast<std::uint64_t>(i)));
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  seeded_shuffle(items, rng);
}

}  // namespace physforge
