#pragma once

// Portable random streams. Every draw is a pure function of the seed, so
// golden values agree across compilers and standard libraries: the engine is
// std::mt19937_64 (sequence fixed by the standard) and the distributions are
// implemented here rather than taken from <random>, whose algorithms are
// implementation-defined.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace crf {

/// SplitMix64 finalizer; also used to derive independent sub-seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a sub-seed for stream `tag` of `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) noexcept {
  return splitmix64(seed ^ splitmix64(tag + 0x632be59bd9b4e019ULL));
}

/// Maps a 64-bit word to [0, n) without modulo bias (Lemire); `next` supplies
/// fresh words when a draw must be rejected.
template <class NextWord>
std::uint64_t bounded_index(std::uint64_t n, NextWord&& next) {
  if (n <= 1) return 0;
  std::uint64_t x = next();
  unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      x = next();
      m = static_cast<unsigned __int128>(x) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

/// Uniform index in [0, n) determined by (seed, counter) alone.
inline std::uint64_t counter_index(std::uint64_t seed, std::uint64_t counter, std::uint64_t n) {
  std::uint64_t state = derive_seed(seed, counter);
  return bounded_index(n, [&state] { return state = splitmix64(state); });
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal via the Box-Muller transform (both outputs are used).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  std::uint64_t index(std::uint64_t n) {
    return bounded_index(n, [this] { return engine_(); });
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace crf
