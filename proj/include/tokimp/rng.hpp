// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace tokimp {

/// Seeded generator used by every stochastic routine.
///
/// Backed by std::mt19937_64, whose output sequence is fixed by the C++
/// standard, so streams are bit-identical across platforms. Uniforms are
/// built from the top 53 bits by hand rather than through
/// std::uniform_real_distribution, whose algorithm is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on (0, 1]; never returns 0 so log(u) is finite.
  double uniform_open0() {
    return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
  }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Index in [0, n) drawn from the given cumulative probabilities.
  template <typename Range>
  std::size_t categorical(const Range& probs) {
    const double u = uniform();
    double acc = 0.0;
    std::size_t last_positive = 0;
    std::size_t i = 0;
    for (double p : probs) {
      if (p > 0.0) last_positive = i;
      acc += p;
      if (u < acc) return i;
      ++i;
    }
    return last_positive;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace tokimp

namespace tokimp {

/// SplitMix64 finalizer; derives independent child seeds from (seed, salt).
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace tokimp
