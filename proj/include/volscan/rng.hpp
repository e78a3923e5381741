#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace volscan {

// SplitMix64 finalizer. Stateless, so streams can be keyed by (seed, index)
// pairs and drawn in any order with identical results.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Named sub-seed: one root --seed fans out into independent streams
// ("data", "init", "shuffle", ...) via FNV-1a of the stream name.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : stream) {
    h ^= std::uint8_t(c);
    h *= 0x100000001b3ull;
  }
  return mix64(root ^ h);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  return mix64(root ^ mix64(index));
}

// Counter-based generator: next() is mix64 over an incrementing counter.
// Float draws avoid transcendentals so generated data is reproducible across
// platforms given IEEE-754 arithmetic.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return mix64(state_++); }

  // [0, 1) with 53 random bits; complements 1-x are exactly representable.
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Unbiased enough for data synthesis; deterministic, which is what matters here.
  std::uint64_t next_below(std::uint64_t n) {
    return std::uint64_t((__uint128_t(next_u64()) * n) >> 64);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = std::size_t(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace volscan
