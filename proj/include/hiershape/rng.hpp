#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace hiershape {

/// SplitMix64 finalizer; maps (master seed, stream index) to independent sub-seeds.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/**
 * Seeded random stream.
 *
 * Wraps std::mt19937_64 (whose output sequence is fixed by the standard) and
 * maps raw words to doubles/indices with explicit arithmetic instead of the
 * library distributions, whose algorithms are implementation-defined. Draws
 * are therefore identical across standard libraries.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). Requires n > 0.
  std::size_t below(std::size_t n);

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace hiershape
