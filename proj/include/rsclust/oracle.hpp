#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rsclust/consensus.hpp"
#include "rsclust/diagnostics.hpp"
#include "rsclust/model.hpp"
#include "rsclust/partition.hpp"
#include "rsclust/trace.hpp"

namespace rsclust {

inline constexpr int kDefaultOracleCap = 10;
inline constexpr int kLongOracleCap = 14;

/// Complete table of log unnormalized posterior masses.
struct MassTable {
  std::vector<StateKey> states;
  std::vector<double> log_mass;
  double log_Z = 0.0;

  std::size_t size() const noexcept { return states.size(); }
  /// Normalized probabilities in table order.
  Eigen::VectorXd probabilities() const;
  /// (state, log mass) pairs, e.g. for cumulative_mass_curve.
  std::vector<std::pair<StateKey, double>> entries() const;
  /// Log mass lookup; throws invalid_input for states not in the table.
  std::function<double(const StateKey&)> lookup() const;
};

struct OracleOptions {
  int cap = kDefaultOracleCap;
  bool allow_long = false;  // raises the cap to kLongOracleCap
  int threads = 1;
  /// Called with the fraction of enumeration work completed.
  std::function<void(double)> progress;
};

/// Enumerates every partition and evaluates log_posterior_unnorm.
/// Work is split by label prefix; log_Z is combined in prefix order so the
/// result does not depend on the thread count.
MassTable exact_posterior_table(const DataMatrix& data, const HyperParams& hyper,
                                const OracleOptions& options = {});

/// rho_ij = sum over table entries of normalized mass x co-cluster indicator.
ConsensusMatrix exact_consensus(const MassTable& table);

/// The K most probable states of the table, ties by key.
std::vector<StateKey> exact_top_states(const MassTable& table, int K);

/// Finite chain on labelled states with row-stochastic transitions.
struct ChainFixture {
  std::vector<StateKey> states;
  Eigen::MatrixXd P;
  Eigen::VectorXd pi;             // stationary distribution (normalized)
  std::vector<double> log_mass;   // log unnormalized stationary masses
  std::vector<int> island;        // 0 = minor, 1 = major; empty if not islanded
};

/// Stationary vector of a row-stochastic matrix from the eigenvector of
/// P' for the eigenvalue closest to one.
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& P);

/// Validates P (rows sum to one within 1e-12, non-negative) and attaches
/// its stationary distribution; checks pi' P = pi' within 1e-10.
ChainFixture make_fixture(std::vector<StateKey> states, Eigen::MatrixXd P);

/// Same checks with a known stationary vector in place of the eigensolver.
ChainFixture make_fixture(std::vector<StateKey> states, Eigen::MatrixXd P,
                          Eigen::VectorXd pi);

/// Two-island chain on the partitions of 5 observations. The minor island
/// is every partition co-clustering observations 1 and 2 (15 states) and
/// carries stationary mass epsilon; the other 37 states carry 1 - epsilon.
/// Within each island, Metropolis-Hastings moves with uniform proposals; with
/// probability `cross_proposal` a uniform state of the other island is
/// proposed instead. The minor island is uniform inside, the major island
/// is Zipf-weighted, so pairing states across islands gives unequal mass
/// ratios. With the default cross_proposal the escape probability per step
/// is below 1e-6.
ChainFixture adversarial_two_island_fixture(double epsilon,
                                            double cross_proposal = 1e-7);

/// Scheme whose i-th set pairs the i-th state of the minor island with the
/// i-th state of the major island (each island ranked by mass, ties by key).
PartitionScheme island_pair_scheme(const ChainFixture& fixture, int K);

/// Exact simulation of n steps from `start` (an index into states). The
/// start state is recorded first. Trace log posteriors are the fixture's
/// log masses.
Trace simulate_fixture_chain(const ChainFixture& fixture, std::size_t n,
                             std::size_t start, std::uint64_t seed);

/// 0.5 * sum |p - q| between empirical visit frequencies of a trace and a
/// mass table (states absent from the trace count as zero frequency).
double total_variation(const Trace& trace, const MassTable& table);

}  // namespace rsclust
