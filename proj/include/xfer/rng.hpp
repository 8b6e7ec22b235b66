#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "xfer/hash.hpp"

namespace xfer {

/// Deterministic random stream.
///
/// The generator is xoshiro256** seeded through SplitMix64, and every derived
/// quantity is computed here from raw 64-bit outputs (no std::*_distribution),
/// so a given seed yields the same draw sequence on every platform:
///  - uniform():      top 53 bits / 2^53, in [0, 1)
///  - below(n):       rejection sampling on 64-bit outputs, unbiased in [0, n)
///  - normal():       Box-Muller, one fresh pair of uniforms per call (no caching)
///  - derive(label):  child seed = SplitMix64(seed ^ FNV-1a(label))
///
/// Each stream is meant to be owned by a single consumer; parallel consumers
/// take independent children via derive().
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed) {
    std::uint64_t sm = seed;
    for (auto& s : state_) s = splitmix64(sm);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  /// Number of 64-bit outputs consumed so far.
  std::uint64_t position() const noexcept { return position_; }

  std::uint64_t next_u64() noexcept {
    ++position_;
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  std::uint64_t below(std::uint64_t n) noexcept {
    if (n <= 1) return 0;
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  double normal() noexcept {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  std::uint64_t derive_seed(std::string_view label) const noexcept {
    std::uint64_t sm = seed_ ^ fnv1a64(label);
    return splitmix64(sm);
  }
  SeededRng derive(std::string_view label) const { return SeededRng(derive_seed(label)); }

  template <typename Vec>
  void shuffle(Vec& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }
  static std::uint64_t splitmix64(std::uint64_t& x) noexcept {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t state_[4]{};
  std::uint64_t position_ = 0;
};

}  // namespace xfer
