#pragma once

#include <cstdint>

namespace trustopt {

// SplitMix64 output function. Feeding it key + (n+1)*kGolden yields the n-th
// output of a SplitMix64 generator seeded with key, so every stream position
// can be addressed directly.
inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derives an independent substream key from a parent key and up to three
/// labels (edge endpoints, realization index, stream tag...).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                    std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t k = mix64(base + kGolden);
  k = mix64(k ^ (a + 0x632BE59BD9B4E019ULL));
  k = mix64(k ^ (b + 0x85157AF5ULL));
  k = mix64(k ^ (c + 0x1D8E4E27C47D124FULL));
  return k;
}

/// Uniform double in [0,1) at position `counter` of the stream `key`.
constexpr double counter_uniform(std::uint64_t key, std::uint64_t counter) {
  const std::uint64_t x = mix64(key + (counter + 1) * kGolden);
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit constexpr SplitMix64(std::uint64_t seed) : state_(seed) {}

  constexpr result_type operator()() {
    state_ += kGolden;
    return mix64(state_);
  }
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  constexpr double uniform01() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  constexpr double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

 private:
  std::uint64_t state_;
};

}  // namespace trustopt
