#pragma once

#include <cstdint>
#include <vector>

#include "nytron/error.hpp"

namespace nytron {

// splitmix64 ("sm64/v1"). Fixed across platforms so that sharding, basis
// selection and every other seeded decision reproduce bit-for-bit anywhere.
class Rng64 {
 public:
  explicit Rng64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Unbiased draw from [0, bound) by rejection.
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound == 0) throw ContractError("Rng64::next_below: bound must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return v % bound;
  }

  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Independent stream derived from (seed, stream_id); used to give each
  // worker its own reproducible sequence.
  static Rng64 stream(std::uint64_t seed, std::uint64_t stream_id) {
    Rng64 mixer(seed ^ (0xD1B54A32D192ED03ULL * (stream_id + 1)));
    return Rng64(mixer.next());
  }

 private:
  std::uint64_t state_;
};

// Fisher-Yates permutation of {0, ..., n-1}.
inline std::vector<std::uint32_t> random_permutation(std::uint32_t n, Rng64& rng) {
  std::vector<std::uint32_t> perm(n);
  for (std::uint32_t i = 0; i < n; ++i) perm[i] = i;
  for (std::uint32_t i = n; i > 1; --i) {
    const std::uint64_t j = rng.next_below(i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

}  // namespace nytron
