#include <gtest/gtest.h>

#include <boost/math/special_functions/gamma.hpp>

#include "rsclust/diagnostics.hpp"
#include "rsclust/errors.hpp"
#include "rsclust/oracle.hpp"
#include "rsclust/projection.hpp"
#include "rsclust/samplers.hpp"
#include "support.hpp"

using namespace rsclust;

namespace {

Eigen::MatrixXd random_spd(int k, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd m(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) m(i, j) = nd(rng);
  }
  return m * m.transpose() + 0.1 * Eigen::MatrixXd::Identity(k, k);
}

// Four-state chain with log masses shifted by `shift`. Schemes over the
// three most probable states leave a remainder, so the covariance of
// 1{i}/q_i is not forced singular.
Trace four_state_trace(double shift, std::uint64_t seed) {
  Eigen::MatrixXd P(4, 4);
  P << 0.4, 0.3, 0.2, 0.1,
       0.2, 0.5, 0.2, 0.1,
       0.3, 0.2, 0.4, 0.1,
       0.2, 0.3, 0.3, 0.2;
  ChainFixture f = make_fixture(
      {StateKey("111"), StateKey("112"), StateKey("121"), StateKey("122")}, P);
  for (auto& lm : f.log_mass) lm += shift;
  return simulate_fixture_chain(f, 20'000, 0, seed);
}

}  // namespace

TEST(ChiSquare, Values) {
  EXPECT_EQ(chi2_upper_tail(0.0, 3), 1.0);
  EXPECT_NEAR(chi2_upper_tail(3.841459, 1), 0.05, 1e-6);
  EXPECT_NEAR(chi2_upper_tail(16.918978, 9), 0.05, 1e-6);
  EXPECT_THROW(chi2_upper_tail(1.0, 0), Error);
  EXPECT_THROW(chi2_upper_tail(-1.0, 2), Error);
}

TEST(ChiSquare, MatchesReferenceIncompleteGamma) {
  for (int dof = 1; dof <= 30; ++dof) {
    for (double x : {1e-6, 0.01, 0.3, 1.0, 2.5, 5.0, 9.9, 17.0, 30.0, 60.0, 150.0, 400.0}) {
      const double want = boost::math::gamma_q(0.5 * dof, 0.5 * x);
      EXPECT_NEAR(chi2_upper_tail(x, dof), want, 1e-12) << dof << " " << x;
    }
  }
}

TEST(Hotelling, HandExample) {
  Eigen::Vector2d g(1.2, 0.8);
  const DiagnosticResult r = hotelling_from_moments(g, Eigen::Matrix2d::Identity(), 100);
  EXPECT_NEAR(r.z_inv_hat, 1.0, 1e-14);
  EXPECT_NEAR(r.t2, 8.0, 1e-12);
  EXPECT_NEAR(r.t2_projection, 8.0, 1e-12);
  EXPECT_EQ(r.dof, 1);
  EXPECT_NEAR(r.p_value, boost::math::gamma_q(0.5, 4.0), 1e-14);
  EXPECT_NEAR(r.p_value, 0.00468, 5e-6);
  EXPECT_NEAR(r.weights.sum(), 1.0, 1e-15);
}

TEST(Hotelling, ProportionalMeansGiveZero) {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd S = random_spd(4, rng);
  const DiagnosticResult r = hotelling_from_moments(Eigen::VectorXd::Constant(4, 0.7), S, 50);
  EXPECT_NEAR(r.t2, 0.0, 1e-12);
  EXPECT_NEAR(r.p_value, 1.0, 1e-12);
  EXPECT_NEAR(r.z_inv_hat, 0.7, 1e-12);
}

TEST(Hotelling, GuardsConditioningAndTourCount) {
  Eigen::Matrix2d S;
  S << 1.0, 1.0, 1.0, 1.0 + 1e-14;
  try {
    hotelling_from_moments(Eigen::Vector2d(1.0, 2.0), S, 100);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::insufficient_regeneration);
  }
  EXPECT_THROW(hotelling_from_moments(Eigen::Vector3d(1, 2, 3), Eigen::Matrix3d::Identity(), 3),
               Error);
  EXPECT_NO_THROW(hotelling_from_moments(Eigen::Vector3d(1, 2, 3), Eigen::Matrix3d::Identity(), 4));
}

TEST(Projection, BlockAlgebra) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 100; ++rep) {
    const int k = 2 + static_cast<int>(rng() % 9);
    const Eigen::MatrixXd S = random_spd(k, rng);
    const Eigen::MatrixXd B = projection_b(S);
    EXPECT_LT((B * B - B).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(B.trace(), k - 1.0, 1e-10);
    const Eigen::VectorXd w = gls_weights(S);
    EXPECT_NEAR(w.sum(), 1.0, 1e-12);
    // A = B S^{-1/2}.
    EXPECT_LT((projection_a(S) - B * inverse_sqrt(S)).cwiseAbs().maxCoeff(), 1e-9);
    Eigen::VectorXd g(k);
    for (int i = 0; i < k; ++i) g(i) = 1.0 + 0.3 * nd(rng);
    const double quad = hotelling_quadratic_form(g, S, 40);
    const double proj = hotelling_projection_form(g, S, 40);
    EXPECT_NEAR(quad, proj, 1e-8 * std::abs(quad));
  }
}

TEST(Scheme, TopKRanksAndBreaksTies) {
  Trace t;
  t.push(StateKey("12"), -1.0);
  t.push(StateKey("11"), -1.0);
  t.push(StateKey("12"), -1.0);
  PartitionScheme s = top_k_scheme(t, 2);
  EXPECT_EQ(s.sets[0][0].str(), "11");
  EXPECT_EQ(s.sets[1][0].str(), "12");
  EXPECT_NEAR(s.q(0), 1.0, 1e-15);
  try {
    top_k_scheme(t, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::insufficient_states);
  }
  Trace u;
  u.push(StateKey("111"), -3.0);
  u.push(StateKey("112"), -1.0);
  u.push(StateKey("121"), -2.0);
  s = top_k_scheme(u, 2);
  EXPECT_EQ(s.sets[0][0].str(), "112");
  EXPECT_EQ(s.sets[1][0].str(), "121");
  EXPECT_NEAR(s.q(1) / s.q(0), std::exp(-1.0), 1e-15);
}

TEST(Scheme, RejectsOverlapAndEmptySets) {
  auto mass = [](const StateKey&) { return 0.0; };
  EXPECT_THROW(make_scheme({{StateKey("11")}, {StateKey("11")}}, mass), Error);
  EXPECT_THROW(make_scheme({{StateKey("11")}, {}}, mass), Error);
  EXPECT_THROW(make_scheme({{StateKey("11")}}, mass), Error);
}

TEST(Scheme, TopTenMatchesExactRanking) {
  const oracle::Dataset ds = oracle::n8_data();
  const MassTable table = exact_posterior_table(ds.data, ds.hyper);
  ChainConfig cfg;
  cfg.n_iterations = 100'000;
  cfg.seed = 4;
  cfg.initial_allocation = Allocation::singletons(8);
  const Trace trace = run_chain(ds.data, ds.hyper, cfg);
  const PartitionScheme s = top_k_scheme(trace, 10);
  const auto exact = exact_top_states(table, 10);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(s.sets[static_cast<std::size_t>(i)][0], exact[static_cast<std::size_t>(i)]);
}

TEST(HotellingRs, ScaleEquivariance) {
  const Trace a = four_state_trace(0.0, 5);
  const Trace b = four_state_trace(std::log(1e6), 5);
  const Tours ta = find_tours(a, StateKey("111"));
  const Tours tb = find_tours(b, StateKey("111"));
  const DiagnosticResult ra = hotelling_rs(a, ta, top_k_scheme(a, 3));
  const DiagnosticResult rb = hotelling_rs(b, tb, top_k_scheme(b, 3));
  EXPECT_LT((ra.g_bar - rb.g_bar).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(ra.t2, rb.t2, 1e-10 * std::max(1.0, ra.t2));
  EXPECT_NEAR(ra.p_value, rb.p_value, 1e-10);
  EXPECT_NEAR(rb.z_inv_hat * 1e6, ra.z_inv_hat, 1e-10 * ra.z_inv_hat);
  EXPECT_NEAR(ra.weights.sum(), 1.0, 1e-12);
  EXPECT_NEAR(ra.t2, ra.t2_projection, 1e-8 * std::max(1.0, ra.t2));
}

TEST(Hotelling, MomentScaling) {
  // Masses scaled by lambda scale g by 1/lambda and the covariance by 1/lambda^2.
  std::mt19937_64 rng(9);
  const Eigen::MatrixXd S = random_spd(5, rng);
  Eigen::VectorXd g(5);
  g << 1.1, 0.9, 1.05, 0.97, 1.2;
  const DiagnosticResult a = hotelling_from_moments(g, S, 60);
  for (double lambda : {1e-3, 7.0, 1e5}) {
    const DiagnosticResult b = hotelling_from_moments(g / lambda, S / (lambda * lambda), 60);
    EXPECT_NEAR(a.t2, b.t2, 1e-10 * a.t2);
    EXPECT_NEAR(a.p_value, b.p_value, 1e-10);
    EXPECT_NEAR(b.z_inv_hat * lambda, a.z_inv_hat, 1e-10 * a.z_inv_hat);
  }
}

TEST(HotellingRs, EquilibriumFixtureIsNotRejected) {
  // Masses are the exact stationary ones, so the null holds.
  const Trace a = four_state_trace(0.0, 6);
  const DiagnosticResult r = hotelling_rs(a, find_tours(a, StateKey("111")), top_k_scheme(a, 3));
  EXPECT_GE(r.t2, 0.0);
  EXPECT_GT(r.p_value, 1e-4);
  EXPECT_EQ(r.dof, 2);
  EXPECT_TRUE(r.unvisited.empty());
}

TEST(HotellingRs, UnvisitedSetsAreReported) {
  const Trace a = four_state_trace(0.0, 7);
  auto mass = [](const StateKey& k) { return k.str() == "123" ? -0.5 : -1.0; };
  const PartitionScheme s = make_scheme(
      {{StateKey("111")}, {StateKey("112")}, {StateKey("121")}, {StateKey("123")}}, mass);
  const DiagnosticResult r = hotelling_rs(a, find_tours(a, StateKey("111")), s);
  ASSERT_EQ(r.unvisited, std::vector<int>{3});
  EXPECT_EQ(r.g_bar(3), 0.0);
  EXPECT_EQ(r.weights(3), 0.0);
  EXPECT_EQ(r.dof, 2);
  EXPECT_FALSE(r.warnings.empty());
  EXPECT_EQ(r.K, 4);
}

TEST(HotellingRs, TooFewToursForK) {
  Trace t;
  for (const char* k : {"111", "112", "121", "111", "112", "111"}) t.push(StateKey(k), -1.0);
  const Tours tours = find_tours(t, StateKey("111"));
  ASSERT_EQ(tours.R, 2);
  try {
    hotelling_rs(t, tours, top_k_scheme(t, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::insufficient_regeneration);
  }
}

TEST(Cv, ConstantIndicatorAndDirectRatio) {
  Trace t;
  for (const char* k : {"112", "113", "112", "113", "112"}) t.push(StateKey(k), -1.0);
  const Tours tours = find_tours(t, StateKey("112"));
  EXPECT_EQ(cv_diagnostic(t, tours, 0, 1), 0.0);  // always co-clustered
  const Trace a = four_state_trace(0.0, 8);
  const Tours ta = find_tours(a, StateKey("111"));
  const RsEstimate est = rs_estimate(a, ta, GSpec::co_cluster(1, 2), true);
  const double rho = est.mean(0);
  const double se = std::sqrt(est.cov(0, 0) / est.R);
  EXPECT_NEAR(cv_diagnostic(a, ta, 1, 2), se / std::max(rho, 1 - rho), 1e-15);
  const CvSummary all = cv_all_pairs(a, ta);
  EXPECT_NEAR(all.cv(1, 2), cv_diagnostic(a, ta, 1, 2), 1e-15);
  EXPECT_EQ(all.max_cv, all.cv.maxCoeff());
}
