#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace qkd {

// One root seed expands into independent named streams (source, alice, bob,
// eve, channel, public, ...) so that adding an adversary never perturbs the
// honest parties' draws. Draw primitives are implemented directly on top of
// the engine output: std::*_distribution is implementation-defined, which
// would break byte-identical reports across toolchains.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0, 1). Exactly one engine draw.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// True with probability p. Exactly one engine draw.
  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n). Rejection-sampled, unbiased.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  int uniform_bit() { return static_cast<int>(engine_() >> 63); }

  /// Poisson sample by Knuth's product method; fine for the small means
  /// used for weak coherent sources.
  unsigned poisson(double mean) {
    const double threshold = std::exp(-mean);
    unsigned count = 0;
    double product = uniform();
    while (product >= threshold) {
      ++count;
      product *= uniform();
    }
    return count;
  }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace detail

/// Derives the seed of an independent named stream from a root seed and an
/// optional trial index.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view name,
                                 std::uint64_t trial = 0) {
  std::uint64_t h = detail::splitmix64(root);
  h = detail::splitmix64(h ^ detail::fnv1a(name));
  h = detail::splitmix64(h ^ (trial * 0x9e3779b97f4a7c15ULL + 1));
  return h;
}

inline RandomStream make_stream(std::uint64_t root, std::string_view name,
                                std::uint64_t trial = 0) {
  return RandomStream(derive_seed(root, name, trial));
}

}  // namespace qkd
