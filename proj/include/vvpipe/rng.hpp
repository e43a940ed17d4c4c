#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

#include "vvpipe/common.hpp"

namespace vvpipe {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Seeded pseudo-random stream. One root stream drives a whole run; every
// stage derives its own substream with split(), so results do not depend on
// the order in which stages happen to consume randomness.
//
// The engine is std::mt19937_64 (its output sequence is pinned by the
// standard); all distribution transforms are done by hand because the
// standard library's distribution objects are not portable across
// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  // Derives an independent substream. Does not consume state from this one.
  Rng split(std::string_view tag) const {
    return Rng(splitmix64(seed_ ^ fnv1a64(tag)));
  }
  Rng split(std::string_view tag, std::uint64_t index) const {
    return Rng(splitmix64(splitmix64(seed_ ^ fnv1a64(tag)) + index));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [0, n), unbiased.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw InvalidArgument("Rng::next_below: n must be positive");
    const std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // Standard normal via Box-Muller; pairs are cached.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(std::distance(first, last));
    for (std::uint64_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[next_below(i)]);
    }
  }

  // k distinct indices drawn uniformly from [0, n), returned in ascending
  // order. Partial Fisher-Yates over an index vector.
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t k) {
    if (k > n) {
      throw InvalidArgument("sample_without_replacement: k exceeds n");
    }
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(next_below(n - i));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace vvpipe
