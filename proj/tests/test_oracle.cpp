#include <gtest/gtest.h>

#include <algorithm>

#include "rsclust/consensus.hpp"
#include "rsclust/diagnostics.hpp"
#include "rsclust/errors.hpp"
#include "rsclust/oracle.hpp"
#include "support.hpp"

using namespace rsclust;

namespace {

std::map<std::string, double> visit_frequencies(const Trace& t) {
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < t.size(); ++i) out[t.state(i).str()] += 1.0 / static_cast<double>(t.size());
  return out;
}

MassTable fixture_table(const ChainFixture& f) {
  MassTable m;
  m.states = f.states;
  m.log_mass = f.log_mass;
  double z = 0.0;
  for (double lm : f.log_mass) z += std::exp(lm);
  m.log_Z = std::log(z);
  return m;
}

std::size_t first_minor_state(const ChainFixture& f) {
  return static_cast<std::size_t>(std::find(f.island.begin(), f.island.end(), 0) - f.island.begin());
}

}  // namespace

TEST(ExactTable, SmallCases) {
  std::mt19937_64 rng(1);
  const DataMatrix d1 = oracle::random_data(1, 3, 2, rng, 1.0);
  const HyperParams h{0.0, 0.5, 0.3, 1.5, 0.5};
  const MassTable t1 = exact_posterior_table(d1, h);
  ASSERT_EQ(t1.size(), 1u);
  EXPECT_EQ(t1.states[0].str(), "1");
  EXPECT_DOUBLE_EQ(t1.log_Z, t1.log_mass[0]);

  const DataMatrix d3 = oracle::random_data(3, 3, 2, rng, 1.0);
  const MassTable t3 = exact_posterior_table(d3, h);
  std::vector<std::string> keys;
  for (const auto& s : t3.states) keys.push_back(s.str());
  EXPECT_EQ(keys, (std::vector<std::string>{"111", "112", "121", "122", "123"}));
  for (std::size_t s = 0; s < t3.size(); ++s) {
    EXPECT_NEAR(t3.log_mass[s], log_posterior_unnorm(d3, t3.states[s].allocation(), h), 1e-12);
  }
  EXPECT_NEAR(t3.probabilities().sum(), 1.0, 1e-14);
  EXPECT_NEAR(t3.lookup()(StateKey("122")), t3.log_mass[3], 0.0);
  EXPECT_THROW(t3.lookup()(StateKey("1234")), Error);
}

TEST(ExactTable, CapIsEnforced) {
  std::mt19937_64 rng(2);
  const HyperParams h{0.0, 0.5, 0.3, 1.5, 0.5};
  const DataMatrix d11 = oracle::random_data(11, 2, 1, rng, 1.0);
  const DataMatrix d15 = oracle::random_data(15, 2, 1, rng, 1.0);
  for (const auto& [data, options] :
       {std::pair{d11, OracleOptions{}}, std::pair{d15, OracleOptions{.allow_long = true}}}) {
    try {
      exact_posterior_table(data, h, options);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::resource_limit);
    }
  }
}

TEST(ExactTable, ThreadCountDoesNotChangeResult) {
  const oracle::Dataset ds = oracle::n8_data();
  const MassTable a = exact_posterior_table(ds.data, ds.hyper, {.threads = 1});
  const MassTable b = exact_posterior_table(ds.data, ds.hyper, {.threads = 4});
  EXPECT_EQ(a.states, b.states);
  EXPECT_EQ(a.log_mass, b.log_mass);
  EXPECT_EQ(a.log_Z, b.log_Z);
  EXPECT_EQ(a.size(), 4140u);
  EXPECT_TRUE(std::is_sorted(a.states.begin(), a.states.end()));
}

TEST(ExactTable, NormalizerIsOrderFree) {
  const oracle::Dataset ds = oracle::n8_data();
  const MassTable t = exact_posterior_table(ds.data, ds.hyper);
  std::vector<double> lm = t.log_mass;
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    std::shuffle(lm.begin(), lm.end(), rng);
    double acc = -std::numeric_limits<double>::infinity();
    for (double x : lm) acc = oracle::logaddexp(acc, x);
    EXPECT_NEAR(acc, t.log_Z, 1e-12 * std::max(1.0, std::abs(t.log_Z)));
  }
}

TEST(ExactTable, TopStates) {
  const oracle::Dataset ds = oracle::n5_data();
  const MassTable t = exact_posterior_table(ds.data, ds.hyper);
  const auto top = exact_top_states(t, 52);
  for (std::size_t i = 1; i < top.size(); ++i) {
    EXPECT_GE(t.lookup()(top[i - 1]), t.lookup()(top[i]));
  }
  try {
    exact_top_states(t, 53);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::insufficient_states);
  }
}

TEST(Fixture, RejectsBadTransitionMatrix) {
  const std::vector<StateKey> keys{StateKey("11"), StateKey("12")};
  Eigen::MatrixXd P(2, 2);
  P << 0.5, 0.5, 0.3, 0.6;
  EXPECT_THROW(make_fixture(keys, P), Error);
  P << 1.2, -0.2, 0.3, 0.7;
  EXPECT_THROW(make_fixture(keys, P), Error);
  EXPECT_THROW(make_fixture({StateKey("11")}, P), Error);
  P << 0.9, 0.1, 0.3, 0.7;
  const ChainFixture f = make_fixture(keys, P);
  EXPECT_NEAR(f.pi(0), 0.75, 1e-12);
  EXPECT_NEAR(std::exp(f.log_mass[1]), 0.25, 1e-12);
  EXPECT_NO_THROW(make_fixture(keys, P, Eigen::Vector2d(0.75, 0.25)));
  EXPECT_THROW(make_fixture(keys, P, Eigen::Vector2d(0.5, 0.5)), Error);
  EXPECT_THROW(make_fixture(keys, P, Eigen::Vector2d(0.7, 0.25)), Error);
}

TEST(Fixture, TwoIslandStructure) {
  const ChainFixture f = adversarial_two_island_fixture(0.01);
  ASSERT_EQ(f.states.size(), 52u);
  double minor = 0.0;
  int minor_count = 0;
  for (std::size_t s = 0; s < f.states.size(); ++s) {
    const bool together = f.states[s].str()[0] == f.states[s].str()[1];
    EXPECT_EQ(f.island[s], together ? 0 : 1);
    if (together) {
      minor += f.pi(static_cast<Eigen::Index>(s));
      ++minor_count;
    }
  }
  EXPECT_EQ(minor_count, 15);
  EXPECT_NEAR(minor, 0.01, 1e-10);
  const Eigen::RowVectorXd drift = f.pi.transpose() * f.P - f.pi.transpose();
  EXPECT_LT(drift.cwiseAbs().maxCoeff(), 1e-15);
  for (std::size_t s = 0; s < f.states.size(); ++s) {
    double escape = 0.0;
    for (std::size_t j = 0; j < f.states.size(); ++j) {
      if (f.island[j] != f.island[s]) escape += f.P(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j));
    }
    EXPECT_LT(escape, 1e-6);
    EXPECT_GT(escape, 0.0);
  }
}

TEST(Fixture, TrappedRunIsUniformInsideMinorIsland) {
  // With the default cross proposal about one run in ten escapes within
  // 1e6 steps; shrink it so the run stays put.
  const ChainFixture f = adversarial_two_island_fixture(0.01, 1e-12);
  const Trace t = simulate_fixture_chain(f, 1'000'000, first_minor_state(f), 21);
  std::map<std::string, double> uniform;
  for (std::size_t s = 0; s < f.states.size(); ++s) {
    if (f.island[s] == 0) uniform[f.states[s].str()] = 1.0 / 15.0;
  }
  const auto freq = visit_frequencies(t);
  for (const auto& [k, p] : freq) EXPECT_TRUE(uniform.count(k)) << k;
  EXPECT_LT(oracle::tv(freq, uniform), 0.02);
}

TEST(Fixture, TrappedRunIsDetected) {
  const ChainFixture f = adversarial_two_island_fixture(0.01);
  const Trace t = simulate_fixture_chain(f, 50'000, first_minor_state(f), 22);
  const Tours tours = find_tours(t, most_visited_state(t));
  const DiagnosticResult r = hotelling_rs(t, tours, island_pair_scheme(f, 5));
  EXPECT_LT(r.p_value, 1e-3);

  // Consensus is badly wrong yet looks precise.
  const ConsensusMatrix exact = exact_consensus(fixture_table(f));
  const ConsensusMatrix est = co_occurrence_rs(t, tours);
  EXPECT_GT((est.rho - exact.rho).cwiseAbs().maxCoeff(), 0.10);
  EXPECT_LT(cv_all_pairs(t, tours).max_cv, 0.05);
}

TEST(Fixture, IslandPairScheme) {
  const ChainFixture f = adversarial_two_island_fixture(0.01);
  const PartitionScheme s = island_pair_scheme(f, 4);
  ASSERT_EQ(s.K(), 4);
  for (const auto& set : s.sets) {
    ASSERT_EQ(set.size(), 2u);
    EXPECT_EQ(set[0].str()[0], set[0].str()[1]);
    EXPECT_NE(set[1].str()[0], set[1].str()[1]);
  }
  EXPECT_THROW(island_pair_scheme(f, 1), Error);
  EXPECT_THROW(island_pair_scheme(f, 15), Error);
}

TEST(Simulate, IdentityChainStaysPut) {
  // No unique stationary law, so make_fixture would refuse it.
  ChainFixture f;
  f.states = {StateKey("11"), StateKey("12")};
  f.P = Eigen::MatrixXd::Identity(2, 2);
  f.pi = Eigen::Vector2d(0.5, 0.5);
  f.log_mass = {std::log(0.5), std::log(0.5)};
  EXPECT_THROW(make_fixture(f.states, f.P), Error);
  const Trace t = simulate_fixture_chain(f, 1000, 1, 1);
  EXPECT_EQ(t.size(), 1000u);
  EXPECT_EQ(t.num_distinct(), 1u);
  EXPECT_EQ(t.state(0).str(), "12");
  EXPECT_EQ(t.meta.at("source"), "fixture");
}

TEST(Simulate, TwoStateSwitchRate) {
  Eigen::MatrixXd P(2, 2);
  P << 0.8, 0.2, 0.4, 0.6;
  const ChainFixture f = make_fixture({StateKey("11"), StateKey("12")}, P);
  const Trace t = simulate_fixture_chain(f, 200'000, 0, 2);
  double from0 = 0.0, switches = 0.0;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    if (t.state(i).str() == "11") {
      from0 += 1.0;
      switches += t.state(i + 1).str() == "12" ? 1.0 : 0.0;
    }
  }
  const double rate = switches / from0;
  EXPECT_NEAR(rate, 0.2, 4.0 * std::sqrt(0.2 * 0.8 / from0));
}

TEST(Simulate, WellMixedChainMatchesStationary) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Eigen::MatrixXd P(5, 5);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) P(i, j) = u(rng);
    P.row(i) /= P.row(i).sum();
  }
  const std::vector<StateKey> keys{StateKey("111"), StateKey("112"), StateKey("121"),
                                   StateKey("122"), StateKey("123")};
  const ChainFixture f = make_fixture(keys, P);
  const Trace t = simulate_fixture_chain(f, 1'000'000, 0, 5);
  std::map<std::string, double> pi;
  for (int i = 0; i < 5; ++i) pi[keys[static_cast<std::size_t>(i)].str()] = f.pi(i);
  EXPECT_LT(oracle::tv(visit_frequencies(t), pi), 0.01);
  const MassTable table = fixture_table(f);
  EXPECT_NEAR(total_variation(t, table), oracle::tv(visit_frequencies(t), pi), 1e-12);
}

TEST(TotalVariation, HandCase) {
  MassTable table;
  table.states = {StateKey("11"), StateKey("12")};
  table.log_mass = {std::log(0.75), std::log(0.25)};
  table.log_Z = 0.0;
  Trace t;
  for (const char* k : {"11", "11", "12", "12"}) t.push(StateKey(k), 0.0);
  EXPECT_NEAR(total_variation(t, table), 0.25, 1e-15);
}
