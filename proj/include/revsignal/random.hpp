#pragma once

#include <cstdint>
#include <random>

namespace revsignal {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Seed for work item `index` under `master`; identical no matter which
/// thread runs the item.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// Deterministic generator with platform-independent draws (the standard
/// distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [0, bound) by rejection sampling.
  std::uint64_t below(std::uint64_t bound);
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace revsignal
