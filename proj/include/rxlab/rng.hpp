#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "rxlab/common.hpp"

namespace rxlab {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace detail

// Deterministic random stream. Distributions are implemented by hand (Box-Muller,
// bit extraction) rather than via std:: distributions so that sequences are
// identical across standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(detail::splitmix64(seed)) {}

  // Independent substream addressed by (seed, stream, substream). Monte-Carlo
  // workers draw their own stream per work unit, which makes results invariant
  // to the worker count.
  static Rng derive(std::uint64_t seed, std::uint64_t stream,
                    std::uint64_t substream = 0) {
    std::uint64_t s = detail::splitmix64(seed);
    s = detail::splitmix64(s ^ (0x9e3779b97f4a7c15ull + stream));
    s = detail::splitmix64(s ^ (0xd1b54a32d192ed03ull + substream));
    return Rng(s);
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in (0, 1), never exactly 0 or 1.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  int bit() { return static_cast<int>(next_u64() >> 63); }

  // Uniform integer in [0, n) by rejection.
  int uniform_int(int n) {
    const std::uint64_t bound = ~0ull - (~0ull % static_cast<std::uint64_t>(n));
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= bound);
    return static_cast<int>(x % static_cast<std::uint64_t>(n));
  }

  // Standard normal via Box-Muller; the spare value is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // CN(0, var): independent real/imag parts of variance var/2.
  cplx cgaussian(double var) {
    const double s = std::sqrt(var * 0.5);
    const double re = gaussian();
    const double im = gaussian();
    return {s * re, s * im};
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace rxlab
