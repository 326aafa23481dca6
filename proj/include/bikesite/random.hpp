#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace bikesite {

/// Portable seeded stream: raw std::mt19937_64 outputs (fully specified by
/// the standard) with bounded draws done here rather than through the
/// implementation-defined std distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n), n > 0. Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Uniform real in [0, 1) from the top 53 bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (one value per call).
  double normal();

  /// First `count` entries become a uniform sample without replacement
  /// (partial Fisher-Yates).
  template <class T>
  void partial_shuffle(std::vector<T>& v, std::size_t count) {
    for (std::size_t i = 0; i < count && i + 1 < v.size(); ++i) {
      const auto j = i + static_cast<std::size_t>(below(v.size() - i));
      using std::swap;
      swap(v[i], v[j]);
    }
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    partial_shuffle(v, v.size());
  }

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer, used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace bikesite
