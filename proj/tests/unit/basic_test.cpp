#include <gtest/gtest.h>

#include "kic/analysis.hpp"
#include "kic/basic.hpp"
#include "kic/distributions.hpp"
#include "kic/experiment.hpp"

using namespace kic;

namespace {

struct Run {
  Dataset data;
  std::unique_ptr<BasicEngine> engine;
};

Run run_basic(const ClassDistribution& dist, std::size_t L, BasicConfig cfg, bool reps,
              std::uint64_t seed) {
  Run r;
  r.data = make_dataset(sample_labels(dist, L, seed), dist.size(), reps);
  r.engine = std::make_unique<BasicEngine>(r.data, cfg);
  SimulatedOracle oracle(r.data.truth());
  drive(*r.engine, oracle);
  return r;
}

}  // namespace

// With class identities fixed in list order, a sample of the class at list
// position p (0-based) costs exactly p / (k-1) + 1 queries.
TEST(Basic, QueryCountFollowsListPosition) {
  for (unsigned k : {2u, 3u, 4u}) {
    BasicConfig c;
    c.k = k;
    c.reorder = ReorderPolicy::fixed;
    const auto r = run_basic(uniform(7), 3000, c, true, 5);
    const auto s = r.engine->stats();
    for (auto id : r.data.samples()) {
      const ClassId cls = *r.data[id].truth;
      ASSERT_EQ(s.per_sample_queries[id.value], cls / (k - 1) + 1) << "k=" << k;
    }
    EXPECT_FALSE(check_labels(r.data, r.engine->store(), true));
  }
}

TEST(Basic, DiscoversClassesWithoutRepresentatives) {
  for (unsigned k : {2u, 3u, 5u}) {
    BasicConfig c;
    c.k = k;
    const auto r = run_basic(zipf(8, 1.0), 5000, c, false, 17);
    EXPECT_FALSE(check_labels(r.data, r.engine->store(), false));
    EXPECT_EQ(r.engine->core().reps().size(), 8u);
    EXPECT_GE(r.engine->core().init_samples(), 1u);
  }
}

TEST(Basic, RepresentativesStayInDescendingCountOrder) {
  BasicConfig c;
  c.k = 3;
  const auto r = run_basic(zipf(6, 1.2), 4000, c, false, 3);
  const auto& reps = r.engine->core().reps();
  const auto& store = r.engine->store();
  for (std::size_t i = 1; i < reps.size(); ++i) {
    const auto a = store.count(reps[i - 1].cls), b = store.count(reps[i].cls);
    EXPECT_TRUE(a > b || (a == b && reps[i - 1].created < reps[i].created));
  }
}

TEST(Basic, SingleSampleAndTinyDatasets) {
  for (std::size_t L : {1u, 2u, 3u}) {
    const auto r = run_basic(uniform(3), L, BasicConfig{}, false, 1);
    EXPECT_TRUE(r.engine->done());
    EXPECT_FALSE(check_labels(r.data, r.engine->store(), false));
  }
  const auto one = run_basic(uniform(3), 1, BasicConfig{}, false, 1);
  EXPECT_EQ(one.engine->stats().queries, 0u);
}

TEST(Basic, UnevenLastGroupFlag) {
  BasicConfig c;
  c.k = 3;
  EXPECT_TRUE(run_basic(uniform(5), 500, c, true, 2).engine->stats().uneven_last_group);
  EXPECT_FALSE(run_basic(uniform(6), 500, c, true, 2).engine->stats().uneven_last_group);
}

TEST(Basic, EliminateLastSavesQueries) {
  BasicConfig plain;
  plain.k = 2;
  BasicConfig elim = plain;
  elim.eliminate_last = true;
  elim.known_classes = 4;
  const auto a = run_basic(uniform(4), 4000, plain, true, 8);
  const auto b = run_basic(uniform(4), 4000, elim, true, 8);
  EXPECT_LT(b.engine->stats().queries, a.engine->stats().queries);
  EXPECT_GT(b.engine->core().eliminated(), 0u);
  EXPECT_FALSE(check_labels(b.data, b.engine->store(), true));
  BasicConfig bad;
  bad.eliminate_last = true;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Basic, NextQueryIsIdempotentWhilePending) {
  const Dataset d = make_dataset({0, 1, 1, 0, 2}, 3, false);
  BasicEngine e(d, BasicConfig{});
  const auto q1 = e.next_query();
  const auto q2 = e.next_query();
  ASSERT_TRUE(q1 && q2);
  EXPECT_EQ(q1->query_seq, q2->query_seq);
  ASSERT_EQ(q1->items.size(), q2->items.size());
  for (std::size_t i = 0; i < q1->items.size(); ++i) EXPECT_EQ(q1->items[i].sample, q2->items[i].sample);
}

// Monte Carlo twin of the closed form for a fixed ordering, 3 sigma.
TEST(Basic, SteadyRateMatchesClosedFormWithinThreeSigma) {
  for (unsigned k : {2u, 3u}) {
    ExperimentSpec s;
    s.algo = 1;
    s.k = k;
    s.dist = {"zipf", 6, 10.0, 1.0, {}};
    s.L = 20000;
    s.replicas = 6;
    s.seed = 99;
    const auto row = run_experiment(s);
    ASSERT_TRUE(row.analytic);
    EXPECT_NEAR(row.mean, *row.analytic, 3 * row.stderr_ + 1e-9) << "k=" << k;
  }
}
