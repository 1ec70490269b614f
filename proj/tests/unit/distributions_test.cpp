#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "kic/distributions.hpp"

using namespace kic;

TEST(Distributions, ConstructorsSumToOne) {
  for (std::size_t n : {1u, 2u, 5u, 10u, 100u, 1000u}) {
    const auto u = uniform(n);
    EXPECT_NEAR(std::accumulate(u.probs().begin(), u.probs().end(), 0.0), 1.0, 1e-12);
    for (double nu : {0.0, 0.5, 1.0, 2.5}) {
      const auto z = zipf(n, nu);
      EXPECT_NEAR(std::accumulate(z.probs().begin(), z.probs().end(), 0.0), 1.0, 1e-12);
    }
    if (n >= 2)
      for (double x : {0.1, 1.0, 10.0, 99.0}) {
        const auto b = big_small(n, x);
        EXPECT_NEAR(std::accumulate(b.probs().begin(), b.probs().end(), 0.0), 1.0, 1e-12);
      }
  }
}

TEST(Distributions, ZipfRatios) {
  const auto z = zipf(4, 1.0);
  // 1, 1/2, 1/3, 1/4 normalised by 25/12.
  EXPECT_NEAR(z[0], 12.0 / 25.0, 1e-15);
  EXPECT_NEAR(z[3], 3.0 / 25.0, 1e-15);
}

// Big class mass over the total small class mass equals x.
TEST(Distributions, BigSmallRatioIsX) {
  for (unsigned n : {2u, 5u, 20u, 100u})
    for (double x : {0.5, 1.0, 10.0, 99.0}) {
      const auto b = big_small(n, x);
      EXPECT_NEAR(b[n - 1] / (b[0] * (n - 1)), x, 1e-12 * x);
    }
  // Eq. (4) worked example: N=20, x=10 gives alpha = 200/11.
  const auto b = big_small(20, 10.0);
  EXPECT_NEAR(b[19], 10.0 / 11.0, 1e-15);
  EXPECT_NEAR(b[0], 1.0 / 209.0, 1e-15);
}

TEST(Distributions, RejectsInvalidVectors) {
  EXPECT_THROW(ClassDistribution({0.5, 0.6}), ConfigError);
  EXPECT_THROW(ClassDistribution({1.2, -0.2}), ConfigError);
  EXPECT_THROW(ClassDistribution(std::vector<double>{}), ConfigError);
  EXPECT_THROW(uniform(0), ConfigError);
  EXPECT_THROW(big_small(1, 2.0), ConfigError);
  EXPECT_NO_THROW(ClassDistribution({0.9, 0.025, 0.025, 0.025, 0.025}));
}

TEST(Distributions, DescendingOrderBreaksTiesByIndex) {
  const ClassDistribution d({0.2, 0.3, 0.2, 0.3});
  EXPECT_EQ(d.descending_order(), (std::vector<ClassId>{1, 3, 0, 2}));
  EXPECT_TRUE(uniform(7).is_uniform());
  EXPECT_FALSE(d.is_uniform());
}

// Pearson chi-square against the 0.999 quantile of chi2 with N-1 dof.
TEST(Distributions, SampleFrequenciesPassChiSquare) {
  struct Case {
    ClassDistribution dist;
    double crit;
  };
  // Quantiles: chi2_{0.999}(4) = 18.467, chi2_{0.999}(9) = 27.877.
  const std::vector<Case> cases = {{zipf(5, 1.0), 18.467},
                                   {big_small(10, 10.0), 27.877},
                                   {ClassDistribution({0.9, 0.025, 0.025, 0.025, 0.025}), 18.467}};
  const std::size_t L = 200000;
  for (const auto& c : cases) {
    const auto labels = sample_labels(c.dist, L, 42);
    std::vector<double> obs(c.dist.size(), 0.0);
    for (auto l : labels) obs[l] += 1;
    double chi2 = 0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const double e = c.dist[i] * L;
      chi2 += (obs[i] - e) * (obs[i] - e) / e;
    }
    EXPECT_LT(chi2, c.crit);
  }
}

TEST(Distributions, SamplingIsSeedDeterministic) {
  EXPECT_EQ(sample_labels(zipf(6, 1.0), 1000, 9), sample_labels(zipf(6, 1.0), 1000, 9));
  EXPECT_NE(sample_labels(zipf(6, 1.0), 1000, 9), sample_labels(zipf(6, 1.0), 1000, 10));
}

TEST(Distributions, MakeDatasetAppendsRepresentatives) {
  const Dataset d = make_dataset({2, 0, 0}, 3, true);
  ASSERT_EQ(d.size(), 6u);
  EXPECT_EQ(d.samples().size(), 3u);
  const auto reps = d.representatives();
  ASSERT_EQ(reps.size(), 3u);
  for (ClassId c = 0; c < 3; ++c) {
    EXPECT_TRUE(d[reps[c]].representative);
    EXPECT_EQ(d[reps[c]].truth, c);
  }
}
