#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>

#include "hcln/common.hpp"

namespace hcln {
namespace detail {

struct TwoSum {
  double s, e;
};

// Knuth two-sum: s + e == a + b exactly, for any a, b.
inline TwoSum two_sum(double a, double b) {
  double s = a + b;
  double bb = s - a;
  double err = (a - (s - bb)) + (b - bb);
  return {s, err};
}

// p + e == a * b exactly (fma gives the rounding error of the product).
inline TwoSum two_prod(double a, double b) {
  double p = a * b;
  double e = std::fma(a, b, -p);
  return {p, e};
}

// Exact running sum kept as a Shewchuk expansion: nonoverlapping components
// in increasing magnitude, zero-eliminated. add() never rounds. The payoff is
// that the sum of an n-fold duplicated vector is exactly n times the sum of
// the source vector, so mean/variance of duplicated inputs reproduce the
// source statistics bit-for-bit (divided_by rounds exactly once, to nearest).
class ExactSum {
 public:
  void clear() { size_ = 0; }

  void add(double x) {
    if (x == 0.0) return;
    double q = x;
    int out = 0;
    for (int i = 0; i < size_; ++i) {
      TwoSum t = two_sum(q, comp_[i]);
      q = t.s;
      if (t.e != 0.0) comp_[out++] = t.e;
    }
    size_ = out;
    HCLN_CHECK(size_ < kCap, "ExactSum component overflow");
    if (q != 0.0) comp_[size_++] = q;
  }

  // Adds a product exactly (both halves of the two_prod).
  void add_product(double a, double b) {
    TwoSum p = two_prod(a, b);
    add(p.e);
    add(p.s);
  }

  double value() const { return divided_by(1); }

  // Round-to-nearest-even of (exact sum) / len, len >= 1.
  double divided_by(std::int64_t len) const {
    if (size_ == 0) return 0.0;
    const double L = static_cast<double>(len);
    double q = approx() / L;
    if (!std::isfinite(q)) return q;
    // Newton steps on the exact residual get q within an ulp.
    for (int iter = 0; iter < 4; ++iter) {
      Expansion r = residual(q, L);
      double step = r.approx() / L;
      double q2 = q + step;
      if (q2 == q) break;
      q = q2;
    }
    // Exact nearest-rounding walk: compare the residual at q and at its
    // neighbor; all comparisons are exact, ties round to even.
    for (int guard = 0; guard < 64; ++guard) {
      Expansion d1 = residual(q, L);
      int s1 = d1.sign();
      if (s1 == 0) return q;
      double qn = std::nextafter(q, s1 > 0 ? std::numeric_limits<double>::infinity()
                                           : -std::numeric_limits<double>::infinity());
      Expansion d2 = residual(qn, L);
      int s2 = d2.sign();
      if (s2 == s1) {  // true quotient lies beyond qn as well
        q = qn;
        continue;
      }
      if (s2 == 0) return qn;
      // Straddling: nearest of the two neighbors wins. |d1|-|d2| = s1*(d1+d2).
      for (int i = 0; i < d2.size; ++i) d1.grow(d2.comp[i]);
      int se = d1.sign();
      if (se == s1) return qn;
      if (se == -s1) return q;
      // Exact tie: round to even mantissa.
      return (std::bit_cast<std::uint64_t>(q) & 1u) == 0 ? q : qn;
    }
    return q;
  }

 private:
  static constexpr int kCap = 64;

  struct Expansion {
    std::array<double, kCap + 4> comp;
    int size = 0;
    void grow(double x) {
      if (x == 0.0) return;
      double q = x;
      int out = 0;
      for (int i = 0; i < size; ++i) {
        TwoSum t = two_sum(q, comp[i]);
        q = t.s;
        if (t.e != 0.0) comp[out++] = t.e;
      }
      size = out;
      if (q != 0.0) comp[size++] = q;
    }
    double approx() const {
      double s = 0.0;
      for (int i = 0; i < size; ++i) s += comp[i];
      return s;
    }
    // Largest-magnitude component of a nonoverlapping expansion carries the sign.
    int sign() const {
      if (size == 0) return 0;
      double top = comp[size - 1];
      return top > 0.0 ? 1 : -1;
    }
  };

  double approx() const {
    double s = 0.0;
    for (int i = 0; i < size_; ++i) s += comp_[i];
    return s;
  }

  // Exact expansion of (sum - q*L).
  Expansion residual(double q, double L) const {
    Expansion r;
    for (int i = 0; i < size_; ++i) r.grow(comp_[i]);
    TwoSum p = two_prod(q, L);
    r.grow(-p.s);
    r.grow(-p.e);
    return r;
  }

  std::array<double, kCap> comp_;
  int size_ = 0;
};

}  // namespace detail
}  // namespace hcln
