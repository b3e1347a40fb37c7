#pragma once

#include <cstdint>
#include <random>

namespace sunprobit {

// Seedable random stream. All stochastic routines take one of these
// explicitly, so runs are reproducible from the seed alone and parallel
// sections can use independently split streams.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

  // Derived stream that is independent of this one for practical purposes.
  // Splitting is a pure function of (seed, index): results do not depend on
  // how much the parent stream has been consumed.
  RngStream split(std::uint64_t index) const {
    return RngStream(mix(seed_ ^ (0x9e3779b97f4a7c15ULL + index * 0xbf58476d1ce4e5b9ULL)));
  }

  std::uint64_t seed() const { return seed_; }

  // Uniform on (0, 1), never returning an exact 0 or 1.
  double uniform() {
    const std::uint64_t bits = engine_() >> 11;  // 53 random bits
    return (static_cast<double>(bits) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double normal();  // standard normal via inverse cdf (portable, deterministic)

  std::uint64_t raw() { return engine_(); }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace sunprobit
