#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace clickrank {

// Deterministic helpers used wherever randomness must be reproducible across
// machines and standard-library versions. std::mt19937_64 bit output is
// portable; the std distributions are not, so sampling is done by hand.

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// A small, fast, seedable generator (xoshiro-style splitmix stream).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x8f1bbcdcbfa53e0bull)) {}

  std::uint64_t next() {
    state_ = splitmix64(state_);
    return state_;
  }

  // Uniform in [0, 1).
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n); n > 0. Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return v % n;
  }

  int index(int n) { return static_cast<int>(below(static_cast<std::uint64_t>(n))); }

  // Uniform in [lo, hi).
  double range(double lo, double hi) { return lo + (hi - lo) * unit(); }

 private:
  std::uint64_t state_;
};

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = rng.below(i);
    std::swap(v[i - 1], v[j]);
  }
}

// Hash a session id and seed to a unit-interval key. This is the split key:
// a pure function of (id, seed), stable across platforms and input order.
inline double split_unit(std::string_view id, std::uint64_t seed) {
  std::uint64_t h = splitmix64(fnv1a64(id) ^ splitmix64(seed));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace clickrank
