#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace icdgp {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Deterministic random stream keyed by (seed, stream id). The same pair
/// reproduces the same draw sequence bit for bit; distinct stream ids give
/// independent chains for the same seed.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream) {
    const std::uint64_t s =
        detail::splitmix64(detail::splitmix64(seed) ^
                           detail::splitmix64(stream * 0x9E3779B97F4A7C15ULL + 1));
    engine_.seed(s);
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Derived stream for a sub-task (replicate, chain, worker).
  RngStream substream(std::uint64_t id) const {
    return RngStream(seed_, detail::splitmix64(stream_ + 1) ^ (id + 1));
  }

  /// Uniform draw on the open interval (0, 1).
  double uniform() {
    while (true) {
      const double u =
          static_cast<double>(engine_() >> 11) * 0x1.0p-53;
      if (u > 0.0) return u;
    }
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Uniform integer on [0, bound) by rejection.
  std::uint64_t integer(std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  /// Standard normal via the Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  double exponential() { return -std::log(uniform()); }

  /// Marsaglia-Tsang gamma sampler.
  double gamma(double shape, double scale) {
    if (shape < 1.0) {
      return gamma(shape + 1.0, scale) * std::pow(uniform(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
    }
  }

  double chi_squared(double df) { return gamma(0.5 * df, 2.0); }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  std::uint64_t stream_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace icdgp
