#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace bseg {

/// Deterministic random source. All conversions from raw 64-bit draws are
/// implemented here so streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  /// Uniform in [0, 1).
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], reproducible across platforms.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = uint64_t(hi - lo) + 1;
    unsigned __int128 m = (unsigned __int128)eng_() * span;
    return lo + int64_t(uint64_t(m >> 64));
  }

  /// Standard normal via Box-Muller; caches the second value.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double mag = std::sqrt(-2.0 * std::log(u1));
    double ang = 2.0 * 3.14159265358979323846 * u2;
    cached_ = mag * std::sin(ang);
    has_cached_ = true;
    return mag * std::cos(ang);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Derive an independent stream (e.g. one per training seed or per stage).
  Rng child(uint64_t stream_id) const {
    return Rng(seed_ ^ (0x9e3779b97f4a7c15ull * (stream_id + 1)));
  }

 private:
  uint64_t seed_;
  std::mt19937_64 eng_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace bseg
