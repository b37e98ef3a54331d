#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace minconv {

/// Mixes a 64-bit value with the SplitMix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic child seed for (seed, stream) pairs, e.g. one per grid point
/// or per epoch.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded generator with platform-independent output.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The standard library distributions are implementation-defined, so
/// uniform and normal variates are produced here: uniform01 takes the top 53
/// bits of one draw, normal uses the Box-Muller transform and caches the
/// second variate.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform01();
  /// Uniform on [a, b).
  double uniform(double a, double b) { return a + (b - a) * uniform01(); }
  double normal(double mean, double stddev);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace minconv
