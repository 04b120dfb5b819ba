#pragma once

#include <cstdint>
#include <utility>

namespace bilinear {

/// SplitMix64: a counter-based generator. The state advances by the golden
/// gamma 0x9E3779B97F4A7C15 on every draw and each output is the counter
/// passed through a fixed 64-bit finalizer, so a stream is a pure function of
/// its seed on every platform. Integer and uniform draws below are bit-exact.
/// normal() goes through libm (log, cos) and is reproducible on a given
/// platform only.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  /// Uniform integer in [0, n) without modulo bias. n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi);

  double normal();

  /// Independent child stream: seeded from a hash of the current state and
  /// the stream id. Does not advance this generator.
  Rng split(std::uint64_t stream) const;

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

/// SplitMix64 finalizer, exposed for seed derivation.
std::uint64_t mix64(std::uint64_t z);

/// Deterministic seed for a labelled sub-stream, e.g. derive_seed(seed, 3).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace bilinear
