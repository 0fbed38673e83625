#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace teli {

// Deterministic RNG with portable output. std::mt19937 has a standardized
// sequence; the distributions here are hand-rolled because the std
// distribution classes are implementation-defined and would break
// bit-reproducibility across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed)
      : gen_(static_cast<std::uint32_t>(seed ^ (seed >> 32))) {}

  std::uint32_t next_u32() { return gen_(); }

  // Uniform in [0, 1) with 24 bits of resolution.
  float uniform() { return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f); }

  float uniform(float lo, float hi) { return lo + uniform() * (hi - lo); }

  // Unbiased integer in [0, n) via rejection sampling.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    if (n <= (1ull << 32)) {
      const std::uint64_t limit = ((1ull << 32) / n) * n;
      std::uint64_t x;
      do {
        x = next_u32();
      } while (x >= limit);
      return x % n;
    }
    std::uint64_t x;
    do {
      x = (static_cast<std::uint64_t>(next_u32()) << 32) | next_u32();
    } while (x >= (std::uint64_t{0xFFFFFFFFFFFFFFFFull} / n) * n);
    return x % n;
  }

  // Fisher-Yates shuffle with the portable integer draw above.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937 gen_;
};

// splitmix64 step; used to derive independent stream seeds from (seed, index).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace teli
