#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <string>

#include "rpbf/error.hpp"
#include "rpbf/rng.hpp"

namespace rpbf {

/// Relative pivot tolerance for every Cholesky factorization in the library.
inline constexpr double kPivotTolerance = 1e-12;

namespace detail {

/// Cholesky factor of a symmetric matrix, failing when any squared pivot falls
/// below kPivotTolerance times the largest diagonal entry.
inline Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& a, const std::string& what) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  const double max_diag = a.diagonal().maxCoeff();
  if (llt.info() != Eigen::Success || !(max_diag > 0.0))
    throw NumericError(what + ": matrix is not positive definite");
  const Eigen::MatrixXd& l = llt.matrixLLT();
  const double floor = kPivotTolerance * max_diag;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (!(l(i, i) * l(i, i) > floor))
      throw NumericError(what + ": matrix is singular to working precision (pivot " +
                         std::to_string(i) + ")");
  }
  return llt;
}

}  // namespace detail

/// A validated symmetric positive-definite matrix with its Cholesky factor.
class SymmetricPD {
 public:
  explicit SymmetricPD(Eigen::MatrixXd a) : a_(std::move(a)) {
    if (a_.rows() == 0 || a_.rows() != a_.cols())
      throw DomainError("SymmetricPD requires a non-empty square matrix");
    const double scale = a_.cwiseAbs().maxCoeff();
    if (!((a_ - a_.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale))
      throw DomainError("SymmetricPD: matrix is not symmetric");
    llt_ = detail::checked_llt(a_, "SymmetricPD");
    lower_ = llt_.matrixL();
    const Eigen::MatrixXd off = a_ - Eigen::MatrixXd(a_.diagonal().asDiagonal());
    diagonal_ = off.cwiseAbs().maxCoeff() == 0.0;
  }

  Eigen::Index order() const noexcept { return a_.rows(); }
  const Eigen::MatrixXd& matrix() const noexcept { return a_; }
  const Eigen::MatrixXd& cholesky_lower() const noexcept { return lower_; }
  bool is_diagonal() const noexcept { return diagonal_; }

  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const {
    if (b.rows() != order()) throw DomainError("solve: right-hand side has wrong row count");
    return llt_.solve(b);
  }

  /// Quadratic form x' A^{-1} x.
  double inverse_quadratic(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd y = llt_.matrixL().solve(x);
    return y.squaredNorm();
  }

 private:
  Eigen::MatrixXd a_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd lower_;
  bool diagonal_ = false;
};

/// Solves a x = b for symmetric positive-definite a.
inline Eigen::MatrixXd solve_spd(const SymmetricPD& a, const Eigen::MatrixXd& b) { return a.solve(b); }

/// Fills an n x p matrix with iid standard normals, row by row.
inline Eigen::MatrixXd standard_normal_matrix(Eigen::Index n, Eigen::Index p, RngStream& rng) {
  Eigen::MatrixXd z(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) z(i, j) = rng.normal();
  return z;
}

/// n iid draws (as rows) from MVN(mean, cov).
inline Eigen::MatrixXd sample_mvn(const Eigen::VectorXd& mean, const SymmetricPD& cov, Eigen::Index n,
                                  RngStream& rng) {
  if (mean.size() != cov.order()) throw DomainError("sample_mvn: mean length differs from covariance order");
  if (n < 0) throw DomainError("sample_mvn: negative sample count");
  Eigen::MatrixXd x = standard_normal_matrix(n, cov.order(), rng);
  if (cov.is_diagonal()) {
    x = x * cov.matrix().diagonal().cwiseSqrt().asDiagonal();
  } else {
    x = x * cov.cholesky_lower().transpose();
  }
  x.rowwise() += mean.transpose();
  return x;
}

}  // namespace rpbf
