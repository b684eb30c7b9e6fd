#pragma once

// Reference computations for the tests. They avoid the library's own numerics
// on purpose: quadrature instead of continued fractions, cofactor inverses
// instead of Cholesky, long double throughout.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

/// Kolmogorov survival function Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::fabs(term) < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

/// One-sample KS test against a continuous CDF; returns the p-value.
inline double ks_one_sample(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  const double en = std::sqrt(n);
  return kolmogorov_q((en + 0.12 + 0.11 / en) * d);
}

/// Two-sample KS test; returns the p-value.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::fabs(i / na - j / nb));
  }
  const double en = std::sqrt(na * nb / (na + nb));
  return kolmogorov_q((en + 0.12 + 0.11 / en) * d);
}

/// Regularized incomplete beta I_x(a, b) for a > 0, b >= 1 by composite
/// Simpson quadrature. For a < 1 the substitution u = s^{1/a} removes the
/// endpoint singularity at 0; for a >= 1 the integrand is used as is.
inline double beta_cdf_quadrature(double x, double a, double b, int intervals = 20000) {
  using LD = long double;
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const bool sub = a < 1.0;
  const LD upper = sub ? std::pow(static_cast<LD>(x), static_cast<LD>(a)) : static_cast<LD>(x);
  const LD h = upper / intervals;
  auto g = [&](LD s) -> LD {
    if (sub) return std::pow(1.0L - std::pow(s, 1.0L / a), static_cast<LD>(b) - 1.0L) / a;
    return std::pow(s, static_cast<LD>(a) - 1.0L) * std::pow(1.0L - s, static_cast<LD>(b) - 1.0L);
  };
  LD sum = g(0.0L) + g(upper);
  for (int k = 1; k < intervals; ++k) sum += (k % 2 ? 4.0L : 2.0L) * g(k * h);
  const LD integral = sum * h / 3.0L;
  const LD log_beta = std::lgamma(static_cast<LD>(a)) + std::lgamma(static_cast<LD>(b)) - std::lgamma(static_cast<LD>(a + b));
  return static_cast<double>(integral / std::exp(log_beta));
}

/// F(d1, d2) CDF via the Beta(d1/2, d2/2) quadrature.
inline double f_cdf_quadrature(double x, double d1, double d2) {
  return beta_cdf_quadrature(d1 * x / (d1 * x + d2), d1 / 2.0, d2 / 2.0);
}

/// Inverse of a 3 x 3 matrix by cofactors.
inline Eigen::Matrix<long double, 3, 3> inverse3(const Eigen::Matrix<long double, 3, 3>& a) {
  Eigen::Matrix<long double, 3, 3> c;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const int r0 = (i + 1) % 3, r1 = (i + 2) % 3, c0 = (j + 1) % 3, c1 = (j + 2) % 3;
      c(i, j) = a(r0, c0) * a(r1, c1) - a(r0, c1) * a(r1, c0);
    }
  const long double det = a(0, 0) * c(0, 0) + a(0, 1) * c(0, 1) + a(0, 2) * c(0, 2);
  return c.transpose() / det;
}

/// Classical two-sample Hotelling statistic in F form for p = 3:
/// (N - p - 1) / ((N - 2) p) * n0 * d' S^{-1} d with S the pooled covariance.
inline double hotelling_f3(const Eigen::MatrixXd& x1, const Eigen::MatrixXd& x2) {
  using LD = long double;
  const int n1 = static_cast<int>(x1.rows()), n2 = static_cast<int>(x2.rows());
  Eigen::Matrix<LD, 3, 1> m1 = Eigen::Matrix<LD, 3, 1>::Zero(), m2 = Eigen::Matrix<LD, 3, 1>::Zero();
  for (int r = 0; r < n1; ++r)
    for (int c = 0; c < 3; ++c) m1(c) += x1(r, c);
  for (int r = 0; r < n2; ++r)
    for (int c = 0; c < 3; ++c) m2(c) += x2(r, c);
  m1 /= n1;
  m2 /= n2;
  Eigen::Matrix<LD, 3, 3> s = Eigen::Matrix<LD, 3, 3>::Zero();
  for (int r = 0; r < n1; ++r)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) s(a, b) += (x1(r, a) - m1(a)) * (x1(r, b) - m1(b));
  for (int r = 0; r < n2; ++r)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) s(a, b) += (x2(r, a) - m2(a)) * (x2(r, b) - m2(b));
  const LD n = n1 + n2;
  s /= (n - 2);
  const Eigen::Matrix<LD, 3, 1> d = m1 - m2;
  const LD t2 = (static_cast<LD>(n1) * n2 / n) * (d.transpose() * inverse3(s) * d)(0, 0);
  return static_cast<double>((n - 3 - 1) / ((n - 2) * 3) * t2);
}

}  // namespace oracle
