#pragma once

#include <cmath>
#include <cstdint>

#include "hcln/common.hpp"

namespace hcln {

namespace detail {

// ln and sin/cos built from IEEE +,-,*,/ and sqrt only, so normal draws are
// bit-identical across platforms (libm implementations differ in low bits).

inline double portable_log(double x) {
  // x in (0, 1]: decompose x = m * 2^e with m in [0.5, 1), then
  // ln m = 2 atanh((m-1)/(m+1)) with |t| <= 1/3.
  int e = 0;
  double m = std::frexp(x, &e);
  double t = (m - 1.0) / (m + 1.0);
  double t2 = t * t;
  double sum = 0.0;
  for (int k = 19; k >= 0; --k) {
    sum = sum * t2 + 1.0 / static_cast<double>(2 * k + 1);
  }
  constexpr double kLn2 = 0.6931471805599453094172321214581766;
  return 2.0 * t * sum + static_cast<double>(e) * kLn2;
}

inline void portable_sincos(double theta, double* s, double* c) {
  // theta in [0, 2*pi). Quadrant reduction with a split pi/2, then Taylor.
  constexpr double kHalfPiHi = 1.5707963267948966;
  constexpr double kHalfPiLo = 6.123233995736766e-17;
  int q = static_cast<int>(theta / kHalfPiHi + 0.5);
  double r = (theta - q * kHalfPiHi) - q * kHalfPiLo;
  double r2 = r * r;
  double sr = 0.0, cr = 0.0;
  for (int k = 10; k >= 1; --k) {
    sr = (sr + 1.0) * (-r2) / static_cast<double>((2 * k) * (2 * k + 1));
    cr = (cr + 1.0) * (-r2) / static_cast<double>((2 * k) * (2 * k - 1));
  }
  sr = r * (1.0 + sr);
  cr = 1.0 + cr;
  switch (q & 3) {
    case 0: *s = sr;  *c = cr;  break;
    case 1: *s = cr;  *c = -sr; break;
    case 2: *s = -sr; *c = -cr; break;
    default: *s = -cr; *c = sr; break;
  }
}

}  // namespace detail

// Seedable 64-bit generator (splitmix64). Identical seed gives an identical
// draw sequence across runs and platforms, including normal() which avoids
// libm transcendentals.
struct Rng {
  uint64_t state = 0;

  Rng() = default;
  explicit Rng(uint64_t seed) : state(seed) {}

  uint64_t next_u64() {
    state += 0x9E3779B97F4A7C15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; two u64 draws per sample, no cached spare.
  double normal() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;          // [0, 1)
    double radius = std::sqrt(-2.0 * detail::portable_log(u1));
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    double s, c;
    detail::portable_sincos(kTwoPi * u2, &s, &c);
    return radius * c;
  }
};

// Derives an independent stream from a base seed and a stream label, so one
// user-facing seed can feed several consumers without overlap.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  Rng r(seed ^ (0x6A09E667F3BCC909ull + stream * 0x9E3779B97F4A7C15ull));
  return r.next_u64();
}

}  // namespace hcln
