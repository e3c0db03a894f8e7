#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

#include "symlms/types.hpp"

namespace symlms {

/// Deterministic, splittable random stream: stream(seed, id) gives an
/// independent generator per (seed, id) pair, bit-reproducible across
/// platforms (mt19937_64 engine, explicit sample transforms; none of the
/// implementation-defined <random> distributions are used).
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream)
      : eng_(mix(seed + 0x9E3779B97F4A7C15ULL * (stream + 1))) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (cosine branch).
  double gaussian() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Zero-mean Laplace with the given scale b (variance 2 b^2).
  double laplace(double scale) {
    double t = uniform();
    while (t == 0.0) t = uniform();
    const double u = t - 0.5;
    return -scale * (u < 0.0 ? -1.0 : 1.0) * std::log1p(-2.0 * std::abs(u));
  }

  /// Index in [0, n) from cumulative probabilities.
  int categorical(const Vector& probs) {
    const double u = uniform();
    double acc = 0.0;
    for (int i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return static_cast<int>(probs.size()) - 1;
  }

  /// Uniform integer in [0, n), rejection-sampled (exactly uniform).
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    const std::uint64_t bound = ~0ULL - (~0ULL % static_cast<std::uint64_t>(n));
    std::uint64_t r = eng_();
    while (r >= bound) r = eng_();
    return static_cast<int>(r % static_cast<std::uint64_t>(n));
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    // splitmix64 finalizer, decorrelates nearby (seed, stream) pairs
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 eng_;
};

}  // namespace symlms
