#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace patmod {

/// Seeded generator used for every random draw in a run. Wraps mt19937_64
/// but derives doubles and bounded integers itself so streams are identical
/// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, bound), bound > 0.
  std::uint64_t below(std::uint64_t bound);
  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view text);
/// Stable seed for a named stream derived from a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t index);

}  // namespace patmod
