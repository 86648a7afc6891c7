#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace hvac {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);

/// Seedable 64-bit Mersenne Twister with named, independent substreams.
/// A substream is a fresh engine seeded from (seed, name); it never shares
/// state with its parent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  Rng substream(std::string_view name) const;
  Rng substream(std::string_view name, std::uint64_t index) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace hvac
