#include <gtest/gtest.h>

#include "rpbf/error.hpp"
#include "rpbf/linalg.hpp"

using namespace rpbf;

TEST(SymmetricPD, RejectsBadInput) {
  EXPECT_THROW(SymmetricPD(Eigen::MatrixXd(2, 3)), DomainError);
  Eigen::MatrixXd asym(2, 2);
  asym << 2, 1, 0, 2;
  EXPECT_THROW(SymmetricPD{asym}, DomainError);
  Eigen::MatrixXd indefinite(2, 2);
  indefinite << 1, 2, 2, 1;
  EXPECT_THROW(SymmetricPD{indefinite}, NumericError);
  Eigen::MatrixXd singular(2, 2);
  singular << 1, 1, 1, 1;
  EXPECT_THROW(SymmetricPD{singular}, NumericError);
}

TEST(SymmetricPD, SolveAndQuadraticForm) {
  Eigen::MatrixXd a(3, 3);
  a << 4, 1, 0.5, 1, 3, 0.2, 0.5, 0.2, 2;
  const SymmetricPD spd(a);
  const Eigen::VectorXd b = Eigen::Vector3d(1, -2, 0.5);
  const Eigen::VectorXd x = spd.solve(b);
  EXPECT_LT((a * x - b).norm(), 1e-13);
  EXPECT_NEAR(spd.inverse_quadratic(b), b.dot(x), 1e-13);
  EXPECT_LT((spd.cholesky_lower() * spd.cholesky_lower().transpose() - a).norm(), 1e-13);
  EXPECT_FALSE(spd.is_diagonal());
  EXPECT_TRUE(SymmetricPD(Eigen::MatrixXd::Identity(4, 4) * 2.0).is_diagonal());
}

TEST(SampleMvn, MomentsMatch) {
  Eigen::MatrixXd cov(2, 2);
  cov << 2.0, 0.6, 0.6, 1.0;
  const SymmetricPD spd(cov);
  RngStream rng(17);
  const Eigen::Vector2d mean(1.0, -3.0);
  const Eigen::MatrixXd x = sample_mvn(mean, spd, 100000, rng);
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Eigen::MatrixXd c = x.rowwise() - mu;
  const Eigen::MatrixXd s = c.transpose() * c / (x.rows() - 1.0);
  EXPECT_NEAR(mu(0), 1.0, 0.02);
  EXPECT_NEAR(mu(1), -3.0, 0.02);
  EXPECT_NEAR(s(0, 0), 2.0, 0.04);
  EXPECT_NEAR(s(0, 1), 0.6, 0.03);
  EXPECT_NEAR(s(1, 1), 1.0, 0.02);
}

TEST(SampleMvn, Deterministic) {
  const SymmetricPD spd(Eigen::MatrixXd::Identity(3, 3));
  RngStream a(5), b(5);
  EXPECT_EQ(sample_mvn(Eigen::VectorXd::Zero(3), spd, 10, a), sample_mvn(Eigen::VectorXd::Zero(3), spd, 10, b));
}
