#pragma once

// Scalar distribution functions: regularized incomplete beta, F and Beta laws.

#include <cmath>
#include <limits>
#include <string>

#include "rpbf/error.hpp"

namespace rpbf {

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int k = 1; k <= 100000; ++k) {
    const double m2 = 2.0 * k;
    double aa = k * (b - k) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + k) * (qab + k) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

inline double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// I_x(a, b) given both x and 1 - x, so callers can pass an accurately
// computed complement.
inline double ibeta_split(double a, double b, double x, double one_minus_x) {
  if (x <= 0.0) return 0.0;
  if (one_minus_x <= 0.0) return 1.0;
  const double log_front = a * std::log(x) + b * std::log(one_minus_x) - log_beta(a, b);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, one_minus_x) / b;
}

inline void require_dof(double d1, double d2) {
  if (!(d1 > 0.0) || !(d2 > 0.0))
    throw DomainError("F distribution degrees of freedom must be positive (got " +
                      std::to_string(d1) + ", " + std::to_string(d2) + ")");
}

// Brent's bracketing root finder on a continuous f with f(lo), f(hi) of opposite sign.
template <typename Fn>
double brent_root(Fn&& f, double lo, double hi, double flo, double fhi, double rel_tol) {
  double a = lo, b = hi, fa = flo, fb = fhi;
  double c = a, fc = fa, d = b - a, e = d;
  for (int iter = 0; iter < 500; ++iter) {
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a;
      fc = fa;
      d = e = b - a;
    }
    if (std::fabs(fc) < std::fabs(fb)) {
      a = b;
      b = c;
      c = a;
      fa = fb;
      fb = fc;
      fc = fa;
    }
    const double tol = 2.0 * std::numeric_limits<double>::epsilon() * std::fabs(b) +
                       0.5 * rel_tol * std::fabs(b);
    const double m = 0.5 * (c - b);
    if (std::fabs(m) <= tol || fb == 0.0) return b;
    if (std::fabs(e) >= tol && std::fabs(fa) > std::fabs(fb)) {
      double p = 0.0, q = 0.0;
      const double s = fb / fa;
      if (a == c) {
        p = 2.0 * m * s;
        q = 1.0 - s;
      } else {
        const double qq = fa / fc;
        const double r = fb / fc;
        p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
        q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q;
      p = std::fabs(p);
      if (2.0 * p < std::fmin(3.0 * m * q - std::fabs(tol * q), std::fabs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = m;
        e = m;
      }
    } else {
      d = m;
      e = m;
    }
    a = b;
    fa = fb;
    b += (std::fabs(d) > tol) ? d : (m > 0.0 ? tol : -tol);
    fb = f(b);
  }
  throw NumericError("root finder did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double ibeta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("ibeta requires positive shape parameters");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("ibeta requires x in [0, 1]");
  return detail::ibeta_split(a, b, x, 1.0 - x);
}

/// Beta(a, b) distribution function.
inline double beta_cdf(double x, double a, double b) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return ibeta(a, b, x);
}

/// P(F(d1, d2) <= x).
inline double f_cdf(double x, double d1, double d2) {
  detail::require_dof(d1, d2);
  if (!(x >= 0.0)) throw DomainError("f_cdf requires x >= 0");
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  const double denom = d1 * x + d2;
  return detail::ibeta_split(0.5 * d1, 0.5 * d2, d1 * x / denom, d2 / denom);
}

/// P(F(d1, d2) > x), computed without cancellation in the upper tail.
inline double f_sf(double x, double d1, double d2) {
  detail::require_dof(d1, d2);
  if (!(x >= 0.0)) throw DomainError("f_sf requires x >= 0");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  const double denom = d1 * x + d2;
  return detail::ibeta_split(0.5 * d2, 0.5 * d1, d2 / denom, d1 * x / denom);
}

/// Upper-alpha quantile of F(d1, d2): the x with P(F > x) = alpha.
///
/// Bracketing Brent search on the incomplete-beta tail; relative accuracy is
/// far below 1e-9 for the degrees of freedom used here (d1, d2 up to several
/// hundred).
inline double f_upper_quantile(double alpha, double d1, double d2) {
  detail::require_dof(d1, d2);
  if (!(alpha > 0.0 && alpha <= 0.5))
    throw DomainError("f_upper_quantile requires alpha in (0, 0.5], got " + std::to_string(alpha));
  auto g = [&](double x) { return f_sf(x, d1, d2) - alpha; };
  double lo = 1.0, hi = 1.0;
  double glo = g(lo), ghi = glo;
  if (glo > 0.0) {
    do {
      lo = hi;
      glo = ghi;
      hi *= 2.0;
      ghi = g(hi);
    } while (ghi > 0.0);
  } else {
    do {
      hi = lo;
      ghi = glo;
      lo *= 0.5;
      glo = g(lo);
    } while (glo <= 0.0);
  }
  if (ghi == 0.0) return hi;
  return detail::brent_root(g, lo, hi, glo, ghi, 1e-14);
}

/// Standard normal distribution function.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace rpbf
