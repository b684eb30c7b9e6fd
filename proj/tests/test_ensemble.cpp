#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rpbf/ensemble.hpp"

using namespace rpbf;

namespace {

GroupedDataset make_data(const std::vector<int>& sizes, Eigen::Index p, std::uint64_t seed, double shift_last) {
  RngStream rng(seed);
  std::vector<Group> groups;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    Eigen::MatrixXd x = standard_normal_matrix(sizes[g], p, rng);
    if (g + 1 == sizes.size()) x.array() += shift_last;
    groups.push_back({"g" + std::to_string(g + 1), x});
  }
  return GroupedDataset(groups);
}

TestConfig small_config() {
  TestConfig c;
  c.num_projections = 40;
  c.mc_reps_fmax = 2000;
  c.mc_reps_psi = 99;
  c.seed = 12;
  return c;
}

CalibratedParams small_params(const std::vector<int>& sizes, const TestConfig& c) {
  return calibrate(sizes, c.calibration_options());
}

}  // namespace

TEST(Decide, StrictInequality) {
  EXPECT_EQ(decide(0.2, 0.2), Decision::accept);
  EXPECT_EQ(decide(1.0, 0.9), Decision::reject);
  EXPECT_EQ(decide(0.0, 0.0), Decision::accept);
  EXPECT_THROW(decide(1.2, 0.1), DomainError);
}

TEST(PairwiseProportions, Basic) {
  const auto p = pairwise_proportions({{{0, 1}, 3}, {{0, 2}, 10}}, 10);
  EXPECT_DOUBLE_EQ(p[0].second, 0.3);
  EXPECT_DOUBLE_EQ(p[1].second, 1.0);
  EXPECT_THROW(pairwise_proportions({{{0, 1}, 11}}, 10), DomainError);
}

TEST(Ensemble, SingleProjectionGivesZeroOrOne) {
  TestConfig c = small_config();
  c.num_projections = 1;
  const GroupedDataset ds = make_data({12, 14, 13}, 60, 1, 0.0);
  const CalibratedParams p = small_params(ds.sizes(), c);
  const double psi = ensemble_statistic(ds, p, c, RngStream(3)).psi;
  EXPECT_TRUE(psi == 0.0 || psi == 1.0);
}

TEST(Ensemble, StrongShiftRejectsEverywhere) {
  const TestConfig c = small_config();
  const GroupedDataset ds = make_data({12, 14, 13}, 60, 2, 2.0);
  const CalibratedParams p = small_params(ds.sizes(), c);
  const EnsembleResult r = ensemble_statistic(ds, p, c, RngStream(4));
  EXPECT_EQ(r.psi, 1.0);
  EXPECT_LT(r.pair_hits[0].second, 10);  // (1,2) has no shift
  EXPECT_GT(r.pair_hits[1].second, 35);
  EXPECT_GT(r.pair_hits[2].second, 35);
  EXPECT_EQ(r.diagnostics.projections, 40);
  EXPECT_EQ(r.diagnostics.resampled, 0);
  EXPECT_LE(r.diagnostics.log_bf_min, r.diagnostics.log_bf_median);
  EXPECT_LE(r.diagnostics.log_bf_median, r.diagnostics.log_bf_max);
}

TEST(Ensemble, IdenticalGroupsStayQuiet) {
  const TestConfig c = small_config();
  RngStream rng(5);
  const Eigen::MatrixXd base = standard_normal_matrix(15, 50, rng);
  std::vector<Group> groups;
  for (int g = 0; g < 3; ++g) {
    Eigen::MatrixXd x = base;
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += 1e-6 * rng.normal();
    groups.push_back({"g" + std::to_string(g), x});
  }
  const GroupedDataset ds(groups);
  const CalibratedParams p = small_params(ds.sizes(), c);
  EXPECT_EQ(ensemble_statistic(ds, p, c, RngStream(6)).psi, 0.0);
}

TEST(Ensemble, DeterministicAcrossThreads) {
  TestConfig c = small_config();
  const GroupedDataset ds = make_data({10, 12, 11}, 40, 7, 0.3);
  const CalibratedParams p = small_params(ds.sizes(), c);
  c.threads = 1;
  const EnsembleResult a = ensemble_statistic(ds, p, c, RngStream(8));
  c.threads = 4;
  const EnsembleResult b = ensemble_statistic(ds, p, c, RngStream(8));
  EXPECT_EQ(a.psi, b.psi);
  EXPECT_EQ(a.pair_hits, b.pair_hits);
  EXPECT_EQ(a.diagnostics.log_bf_mean, b.diagnostics.log_bf_mean);
}

TEST(Ensemble, CompanionCountsMatchItsOwnRun) {
  const TestConfig c = small_config();
  const GroupedDataset ds = make_data({10, 12, 11}, 40, 9, 0.5);
  const auto [pooled, pairwise] = calibrate_both(ds.sizes(), c.calibration_options());
  const EnsembleResult with = ensemble_statistic(ds, pairwise, c, RngStream(1), &pooled);
  const EnsembleResult alone = ensemble_statistic(ds, pooled, c, RngStream(1));
  EXPECT_EQ(with.companion_pair_hits, alone.pair_hits);
}

TEST(Ensemble, SparseProjections) {
  TestConfig c = small_config();
  c.proj_kind = ProjectionKind::sparse;
  const GroupedDataset ds = make_data({12, 14, 13}, 60, 2, 2.0);
  const CalibratedParams p = small_params(ds.sizes(), c);
  EXPECT_EQ(ensemble_statistic(ds, p, c, RngStream(4)).psi, 1.0);
}

TEST(Ensemble, RejectsMismatchedCalibration) {
  const TestConfig c = small_config();
  const GroupedDataset ds = make_data({10, 12, 11}, 40, 9, 0.0);
  const CalibratedParams p = small_params({10, 12, 12}, c);
  EXPECT_THROW(ensemble_statistic(ds, p, c, RngStream(1)), DomainError);
}

TEST(NullPsi, ProportionsAndMethodsAgree) {
  TestConfig c = small_config();
  c.num_projections = 20;
  const std::vector<int> sizes{10, 12, 11};
  const CalibratedParams p = small_params(sizes, c);
  c.psi_null_method = PsiNullMethod::gram;
  const EmpiricalNull gram = null_psi(p, c, 60, 300, RngStream(2));
  c.psi_null_method = PsiNullMethod::direct;
  const EmpiricalNull direct = null_psi(p, c, 60, 300, RngStream(3));
  for (double v : gram.sorted_values()) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  EXPECT_GT(oracle::ks_two_sample(gram.sorted_values(), direct.sorted_values()), 0.001);
  EXPECT_NEAR(std::accumulate(gram.sorted_values().begin(), gram.sorted_values().end(), 0.0) / 300,
              std::accumulate(direct.sorted_values().begin(), direct.sorted_values().end(), 0.0) / 300, 0.03);
}

TEST(NullPsi, MethodResolution) {
  EXPECT_EQ(resolve_psi_null_method(PsiNullMethod::automatic, ProjectionKind::dense, 100, 50), PsiNullMethod::gram);
  EXPECT_EQ(resolve_psi_null_method(PsiNullMethod::automatic, ProjectionKind::sparse, 100, 50), PsiNullMethod::direct);
  EXPECT_EQ(resolve_psi_null_method(PsiNullMethod::automatic, ProjectionKind::dense, 40, 50), PsiNullMethod::direct);
  EXPECT_THROW(resolve_psi_null_method(PsiNullMethod::gram, ProjectionKind::sparse, 100, 50), DomainError);
}

TEST(RunTest, NullAcceptsAndShiftRejects) {
  TestConfig c = small_config();
  const TestReport null_report = run_test(make_data({12, 14, 13}, 60, 21, 0.0), c);
  EXPECT_EQ(null_report.decision, Decision::accept);
  EXPECT_LE(null_report.psi, null_report.psi0_alpha);
  const TestReport shift = run_test(make_data({12, 14, 13}, 60, 22, 1.0), c);
  EXPECT_EQ(shift.decision, Decision::reject);
  EXPECT_DOUBLE_EQ(shift.p_value, 0.01);
  ASSERT_EQ(shift.pairs.size(), 3U);
  EXPECT_TRUE(shift.pairs[0].prop_pooled && shift.pairs[0].prop_pairwise);
  EXPECT_EQ(shift.pairs[2].label_i, "g2");
}

TEST(RunTest, PresetReusesPsiNull) {
  TestConfig c = small_config();
  const GroupedDataset ds = make_data({12, 14, 13}, 60, 23, 0.2);
  const TestReport first = run_test(ds, c);
  ASSERT_TRUE(first.params.psi);
  const TestReport second = run_test(ds, c, first.params);
  EXPECT_EQ(second.psi0_alpha, first.psi0_alpha);
  EXPECT_EQ(second.psi, first.psi);
  EXPECT_EQ(second.p_value, first.p_value);
}
