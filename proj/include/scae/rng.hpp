#pragma once

#include <cstdint>

namespace scae {

// Counter-based generator: the n-th 64-bit draw is SplitMix64's finalizer applied to
// seed + n * 0x9E3779B97F4A7C15. Normal variates use the Box-Muller transform over
// pairs of uniforms; the sine branch is cached and returned on the following call.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  // Uniform integer in [0, bound), rejection-sampled so there is no modulo bias.
  std::uint64_t uniform_int(std::uint64_t bound);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  // Independent stream keyed by `stream`; does not advance this generator.
  Rng fork(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace scae
