#include "physforge/util/rng.hpp"

namespace physforge {

std::uint64_t bounded_u64(std::mt19937_64& rng, std::uint64_t n) {
  if (n == 0) return 0;
  // Rejection sampling over the largest multiple of n below 2^64.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

double unit_real(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace physforge
