#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "oracles.hpp"
#include "rpbf/rng.hpp"

using rpbf::RngStream;

TEST(Philox, KnownAnswers) {
  using rpbf::detail::philox4x32_10;
  EXPECT_EQ(philox4x32_10({0, 0, 0, 0}, {0, 0}),
            (rpbf::detail::PhiloxBlock{0x6627e8d5U, 0xe169c58dU, 0xbc57ac4cU, 0x9b00dbd8U}));
  EXPECT_EQ(philox4x32_10({0xffffffffU, 0xffffffffU, 0xffffffffU, 0xffffffffU}, {0xffffffffU, 0xffffffffU}),
            (rpbf::detail::PhiloxBlock{0x408f276dU, 0x41c83b0eU, 0xa20bc7c6U, 0x6d5451fdU}));
  EXPECT_EQ(philox4x32_10({0x243f6a88U, 0x85a308d3U, 0x13198a2eU, 0x03707344U}, {0xa4093822U, 0x299f31d0U}),
            (rpbf::detail::PhiloxBlock{0xd16cfe09U, 0x94fdccebU, 0x5001e420U, 0x24126ea1U}));
}

TEST(RngStream, SameIdentitySameSequence) {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(RngStream, DerivedStreamsDiffer) {
  const RngStream root(1);
  RngStream a = root.derive(std::uint64_t{0}), b = root.derive(std::uint64_t{1}), c = root.derive("projections");
  EXPECT_NE(a.stream_id(), b.stream_id());
  EXPECT_NE(a.next_u64(), b.next_u64());
  EXPECT_NE(c.stream_id(), root.stream_id());
  EXPECT_EQ(root.derive("x").stream_id(), root.derive("x").stream_id());
  EXPECT_NE(root.derive("x").derive("y").stream_id(), root.derive("y").derive("x").stream_id());
}

TEST(RngStream, UniformOpenIntervalAndMoments) {
  RngStream r(3);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / n, 0.5, 5 * std::sqrt(1.0 / 12 / n));
}

TEST(RngStream, NormalPassesKs) {
  RngStream r(11);
  std::vector<double> x(5000);
  for (auto& v : x) v = r.normal();
  EXPECT_GT(oracle::ks_one_sample(x, [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }), 0.01);
}

TEST(RngStream, GammaMeanAndVariance) {
  RngStream r(5);
  for (double shape : {0.3, 1.0, 2.5, 40.0}) {
    const int n = 100000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double g = r.gamma(shape);
      ASSERT_GT(g, 0.0);
      s += g;
      s2 += g * g;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    EXPECT_NEAR(mean, shape, 5 * std::sqrt(shape / n)) << shape;
    EXPECT_NEAR(var / shape, 1.0, 0.05) << shape;
  }
}

TEST(RngStream, UniformIndexCoversRangeEvenly) {
  RngStream r(9);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    const auto k = r.uniform_index(7);
    ASSERT_LT(k, 7U);
    ++counts[k];
  }
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 7.0) * (c - n / 7.0) / (n / 7.0);
  EXPECT_LT(chi2, 22.46);  // chi-square(6) upper 0.001 point
}
