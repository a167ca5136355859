#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <utility>

namespace flcarbon {

/// splitmix64 output finalizer. Maps 0 to 0.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

/// Derives a child seed from a parent seed and a path of labels, one
/// splitmix64 step per label.
constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                    std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t state = seed;
  for (std::uint64_t label : path) {
    state = mix64(state + kGoldenGamma * (label + 1));
  }
  return state;
}

/// Stream labels for derive_seed so that every consumer of randomness in a
/// run draws from its own sequence.
namespace stream {
inline constexpr std::uint64_t dataset = 1;
inline constexpr std::uint64_t partition = 2;
inline constexpr std::uint64_t init = 3;
inline constexpr std::uint64_t local_round = 4;
inline constexpr std::uint64_t topology = 5;
inline constexpr std::uint64_t split = 6;
}  // namespace stream

/// Seeded pseudo-random stream. Only the raw 64-bit engine output is taken
/// from the standard library; every conversion to a distribution is done
/// here so that sequences are identical across standard library vendors.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

inline RngStream make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  return RngStream(derive_seed(seed, path));
}

}  // namespace flcarbon
