#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "rpbf/distributions.hpp"
#include "rpbf/teststat.hpp"

using namespace rpbf;

namespace {

GroupedDataset random_dataset(const std::vector<int>& sizes, Eigen::Index p, RngStream& rng, double shift_last = 0.0) {
  std::vector<Group> groups;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    Eigen::MatrixXd x = standard_normal_matrix(sizes[g], p, rng);
    if (g + 1 == sizes.size()) x.array() += shift_last;
    groups.push_back({"g" + std::to_string(g + 1), x});
  }
  return GroupedDataset(groups);
}

}  // namespace

TEST(PairDof, Bookkeeping) {
  const std::vector<int> sizes{138, 98, 120};
  const PairDof pooled = pair_dof(sizes, {0, 1}, 88, CovarianceMode::pooled);
  EXPECT_DOUBLE_EQ(pooled.cov_dof, 353);
  EXPECT_DOUBLE_EQ(pooled.dof2, 356 - 88 - 2);
  EXPECT_DOUBLE_EQ(pooled.exponent, 355);
  EXPECT_NEAR(pooled.n0, 57.30508474576271, 1e-12);
  const PairDof pw = pair_dof(sizes, {1, 2}, 88, CovarianceMode::pairwise);
  EXPECT_DOUBLE_EQ(pw.cov_dof, 216);
  EXPECT_DOUBLE_EQ(pw.dof2, 218 - 88 - 1);
  EXPECT_DOUBLE_EQ(pw.exponent, 217);
  EXPECT_EQ(max_feasible_m(sizes, CovarianceMode::pooled), 353);
  EXPECT_EQ(max_feasible_m(sizes, CovarianceMode::pairwise), 216);
}

TEST(PairF, MatchesHotellingOracleWithIdentityProjection) {
  RngStream rng(21);
  const GroupedDataset ds = random_dataset({9, 13}, 3, rng, 0.4);
  const ProjectionMatrix phi = orthonormalize(Eigen::MatrixXd::Identity(3, 3));
  const double expected = oracle::hotelling_f3(ds.group(0).data, ds.group(1).data);
  for (auto mode : {CovarianceMode::pooled, CovarianceMode::pairwise})
    EXPECT_NEAR(f_pair(ds, phi, 0, 1, mode).f, expected, 1e-10 * std::max(1.0, expected));
}

TEST(PairF, MatchesDefinitionalCovariance) {
  RngStream rng(3);
  const GroupedDataset ds = random_dataset({12, 10, 15}, 30, rng, 0.3);
  RngStream pr(4);
  const ProjectionMatrix phi = generate_dense(30, 5, pr);
  const Eigen::MatrixXd& f = phi.columns();
  const Eigen::VectorXd d = (ds.group(0).data.colwise().mean() - ds.group(2).data.colwise().mean()).transpose();
  const Eigen::VectorXd pd = f.transpose() * d;
  const double n0 = harmonic_weight(12, 15);
  const Eigen::MatrixXd sp = f.transpose() * pooled_covariance(ds) * f;
  const double pooled = (37.0 - 5 - 2) / ((37.0 - 3) * 5) * n0 * pd.dot(sp.ldlt().solve(pd));
  EXPECT_NEAR(f_pair(ds, phi, 0, 2, CovarianceMode::pooled).f, pooled, 1e-10 * pooled);
  const Eigen::MatrixXd sw = f.transpose() * pairwise_covariance(ds, 0, 2) * f;
  const double pairwise = (27.0 - 5 - 1) / ((27.0 - 2) * 5) * n0 * pd.dot(sw.ldlt().solve(pd));
  EXPECT_NEAR(f_pair(ds, phi, 0, 2, CovarianceMode::pairwise).f, pairwise, 1e-10 * pairwise);
}

TEST(PairF, LocationInvarianceIsBitExact) {
  RngStream rng(5);
  const GroupedDataset raw = random_dataset({8, 11, 9}, 20, rng, 1.0);
  // values on a 2^-20 grid, so adding 1024 is exact and
  // shifted - reference equals data - reference bit for bit
  std::vector<Group> grid, shifted;
  for (const auto& g : raw.groups()) {
    const Eigen::MatrixXd x = (g.data.array() * 1048576.0).round() / 1048576.0;
    grid.push_back({g.label, x});
    shifted.push_back({g.label, (x.array() + 1024.0).matrix()});
  }
  const GroupedDataset ds(grid);
  RngStream pr(6);
  const ProjectionMatrix phi = generate_dense(20, 4, pr);
  for (auto mode : {CovarianceMode::pooled, CovarianceMode::pairwise}) {
    const FMax a = f_max(ds, phi, mode);
    const FMax b = f_max(GroupedDataset(shifted), phi, mode);
    for (std::size_t k = 0; k < a.all.size(); ++k) EXPECT_EQ(a.all[k].f, b.all[k].f);
  }
}

TEST(PairF, TwoGroupsPooledEqualsPairwise) {
  RngStream rng(7);
  const GroupedDataset ds = random_dataset({14, 19}, 40, rng, 0.2);
  RngStream pr(8);
  const ProjectionMatrix phi = generate_dense(40, 9, pr);
  const double a = f_pair(ds, phi, 0, 1, CovarianceMode::pooled).f;
  const double b = f_pair(ds, phi, 0, 1, CovarianceMode::pairwise).f;
  EXPECT_NEAR(a, b, 1e-12 * a);
}

TEST(PairF, SpanInvariance) {
  RngStream rng(9);
  const GroupedDataset ds = random_dataset({10, 10, 12}, 25, rng, 0.5);
  RngStream pr(10);
  const Eigen::MatrixXd seed = draw_projection_seed(ProjectionKind::dense, 25, 6, pr);
  const GroupSummary summary(ds);
  const auto raw = pair_statistics(project(summary, seed), CovarianceMode::pairwise);
  const auto orth = pair_statistics(project(summary, orthonormalize(seed).columns()), CovarianceMode::pairwise);
  for (std::size_t k = 0; k < raw.size(); ++k) EXPECT_NEAR(raw[k].f, orth[k].f, 1e-10 * orth[k].f);
}

TEST(FMax, TiesGoToSmallestPair) {
  std::vector<PairStat> stats{{{0, 1}, 2.0, 1, 1}, {{0, 2}, 3.0, 1, 1}, {{1, 2}, 3.0, 1, 1}};
  const FMax fm = fmax_of(stats);
  EXPECT_EQ(fm.value, 3.0);
  EXPECT_EQ(fm.argpair, (GroupPair{0, 2}));
}

TEST(PairF, SingularGramIsReported) {
  std::vector<Group> groups{{"a", Eigen::MatrixXd::Ones(3, 5)}, {"b", Eigen::MatrixXd::Ones(3, 5) * 2.0}};
  const GroupedDataset ds(groups);
  RngStream pr(1);
  const ProjectionMatrix phi = generate_dense(5, 2, pr);
  try {
    f_max(ds, phi, CovarianceMode::pairwise);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("pair (1,2)"), std::string::npos) << e.what();
  }
}

TEST(PairF, InfeasibleDimension) {
  RngStream rng(2);
  const GroupedDataset ds = random_dataset({4, 4}, 20, rng);
  RngStream pr(3);
  const ProjectionMatrix phi = generate_dense(20, 7, pr);
  EXPECT_THROW(f_max(ds, phi, CovarianceMode::pairwise), DomainError);
}

TEST(LogBf, ClosedForm) {
  const double f = 2.0, m = 10, dof2 = 40, e = 51, eta = 0.8;
  const double u = m * f / (m * f + dof2);
  const double expected = std::log(std::pow(1 + eta, -m / 2) * std::pow(1 - eta * u / (1 + eta), -e / 2));
  EXPECT_NEAR(log_bf(f, m, dof2, e, eta), expected, 1e-12);
  EXPECT_LT(log_bf(0.0, m, dof2, e, eta), 0.0);
  EXPECT_THROW(log_bf(-1.0, m, dof2, e, eta), DomainError);
  EXPECT_THROW(log_bf(1.0, m, dof2, e, 0.0), DomainError);
  // increasing in f
  EXPECT_LT(log_bf(1.0, m, dof2, e, eta), log_bf(1.5, m, dof2, e, eta));
}

TEST(LogBayesFactor, UsesArgmaxPairDof) {
  FMax fm;
  fm.value = 1.7;
  fm.argpair = {1, 2};
  const std::vector<int> sizes{30, 20, 25};
  const BayesFactorValue bf = log_bayes_factor(fm, 8, sizes, 0.5, CovarianceMode::pairwise);
  EXPECT_DOUBLE_EQ(bf.exponent, 44);
  EXPECT_DOUBLE_EQ(bf.log_bf, log_bf(1.7, 8, 45 - 8 - 1, 44, 0.5));
  EXPECT_EQ(bf.num_groups, 3);
}

TEST(NullDistribution, ProjectedStatisticIsF) {
  const std::vector<int> sizes{20, 25, 30};
  const int m = 6;
  for (auto mode : {CovarianceMode::pooled, CovarianceMode::pairwise}) {
    std::vector<double> f01;
    for (int r = 0; r < 1500; ++r) {
      RngStream s = RngStream(99).derive(static_cast<std::uint64_t>(r));
      f01.push_back(pair_statistics(simulate_projected_null(sizes, m, s), mode)[0].f);
    }
    const double dof2 = pair_dof(sizes, {0, 1}, m, mode).dof2;
    EXPECT_GT(oracle::ks_one_sample(f01, [&](double x) { return f_cdf(x, m, dof2); }), 0.01) << to_string(mode);
  }
}
