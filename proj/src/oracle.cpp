#include "rsclust/oracle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "rsclust/errors.hpp"
#include "rsclust/rng.hpp"

namespace rsclust {

Eigen::VectorXd MassTable::probabilities() const {
  Eigen::VectorXd p(static_cast<Eigen::Index>(log_mass.size()));
  for (std::size_t s = 0; s < log_mass.size(); ++s) {
    p(static_cast<Eigen::Index>(s)) = std::exp(log_mass[s] - log_Z);
  }
  return p;
}

std::vector<std::pair<StateKey, double>> MassTable::entries() const {
  std::vector<std::pair<StateKey, double>> out;
  out.reserve(states.size());
  for (std::size_t s = 0; s < states.size(); ++s) out.emplace_back(states[s], log_mass[s]);
  return out;
}

std::function<double(const StateKey&)> MassTable::lookup() const {
  auto index = std::make_shared<std::unordered_map<StateKey, double>>();
  for (std::size_t s = 0; s < states.size(); ++s) index->emplace(states[s], log_mass[s]);
  return [index](const StateKey& key) {
    auto it = index->find(key);
    if (it == index->end()) {
      fail(ErrorKind::invalid_input, "state " + key.str() + " not in mass table");
    }
    return it->second;
  };
}

namespace {

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double hi = *std::max_element(xs.begin(), xs.end());
  double s = 0.0;
  for (double x : xs) s += std::exp(x - hi);
  return hi + std::log(s);
}

struct Chunk {
  std::vector<StateKey> states;
  std::vector<double> log_mass;
  double log_sum = 0.0;
};

}  // namespace

MassTable exact_posterior_table(const DataMatrix& data, const HyperParams& hyper,
                                const OracleOptions& options) {
  const int n = data.num_observations();
  const int cap = options.allow_long ? std::max(options.cap, kLongOracleCap) : options.cap;
  if (n > cap) {
    fail(ErrorKind::resource_limit,
         "exact posterior for N=" + std::to_string(n) + " exceeds oracle cap " +
             std::to_string(cap) + (options.allow_long ? "" : " (long-run flag not set)"));
  }
  const MarginalModel model(data, hyper);

  const int prefix_len = std::min(n, 4);
  std::vector<std::vector<int>> prefixes;
  for (PartitionStream s(prefix_len); !s.done(); s.advance()) {
    prefixes.emplace_back(s.labels().begin(), s.labels().end());
  }

  std::vector<Chunk> chunks(prefixes.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> finished{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < prefixes.size(); c = next++) {
      Chunk& chunk = chunks[c];
      for (PartitionStream s(n, prefixes[c], kDefaultEnumerationCap); !s.done();
           s.advance()) {
        const Allocation alloc = s.current();
        chunk.states.push_back(alloc.key());
        chunk.log_mass.push_back(model.log_posterior(alloc));
      }
      chunk.log_sum = log_sum_exp(chunk.log_mass);
      const std::size_t done = ++finished;
      if (options.progress && options.threads <= 1) {
        options.progress(static_cast<double>(done) / static_cast<double>(prefixes.size()));
      }
    }
  };
  const int threads = std::max(1, options.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (options.progress) options.progress(1.0);
  }

  MassTable table;
  std::vector<double> chunk_sums;
  for (auto& chunk : chunks) {
    table.states.insert(table.states.end(), chunk.states.begin(), chunk.states.end());
    table.log_mass.insert(table.log_mass.end(), chunk.log_mass.begin(), chunk.log_mass.end());
    chunk_sums.push_back(chunk.log_sum);
  }
  table.log_Z = log_sum_exp(chunk_sums);
  return table;
}

ConsensusMatrix exact_consensus(const MassTable& table) {
  if (table.states.empty()) fail(ErrorKind::invalid_input, "empty mass table");
  const int n = static_cast<int>(table.states.front().str().size());
  ConsensusMatrix out;
  out.rho = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t s = 0; s < table.states.size(); ++s) {
    const double w = std::exp(table.log_mass[s] - table.log_Z);
    const std::string& d = table.states[s].str();
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (d[static_cast<std::size_t>(i)] == d[static_cast<std::size_t>(j)]) out.rho(i, j) += w;
      }
    }
  }
  out.rho.triangularView<Eigen::StrictlyLower>() = out.rho.transpose();
  out.rho.diagonal().setOnes();
  return out;
}

std::vector<StateKey> exact_top_states(const MassTable& table, int K) {
  if (K < 1 || static_cast<std::size_t>(K) > table.size()) {
    fail(ErrorKind::insufficient_states, "K exceeds the number of states");
  }
  std::vector<std::size_t> order(table.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + K, order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (table.log_mass[a] != table.log_mass[b]) {
                        return table.log_mass[a] > table.log_mass[b];
                      }
                      return table.states[a] < table.states[b];
                    });
  std::vector<StateKey> out;
  for (int k = 0; k < K; ++k) out.push_back(table.states[order[static_cast<std::size_t>(k)]]);
  return out;
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& P) {
  Eigen::EigenSolver<Eigen::MatrixXd> eig(P.transpose());
  if (eig.info() != Eigen::Success) {
    fail(ErrorKind::invalid_input, "eigendecomposition of transition matrix failed");
  }
  Eigen::Index best = 0;
  (eig.eigenvalues().array() - 1.0).abs().minCoeff(&best);
  Eigen::VectorXd v = eig.eigenvectors().col(best).real();
  v /= v.sum();
  return v;
}

ChainFixture make_fixture(std::vector<StateKey> states, Eigen::MatrixXd P) {
  Eigen::VectorXd pi;
  if (static_cast<Eigen::Index>(states.size()) == P.rows() && P.rows() == P.cols() &&
      P.rows() > 0) {
    pi = stationary_distribution(P);
  }
  return make_fixture(std::move(states), std::move(P), std::move(pi));
}

ChainFixture make_fixture(std::vector<StateKey> states, Eigen::MatrixXd P,
                          Eigen::VectorXd pi) {
  const auto m = static_cast<Eigen::Index>(states.size());
  if (m < 1 || P.rows() != m || P.cols() != m) {
    fail(ErrorKind::invalid_input, "transition matrix shape does not match states");
  }
  if ((P.array() < 0.0).any()) {
    fail(ErrorKind::invalid_input, "transition probabilities must be non-negative");
  }
  if (((P.rowwise().sum().array() - 1.0).abs() > 1e-12).any()) {
    fail(ErrorKind::invalid_input, "transition rows must sum to one");
  }
  if (pi.size() != m || std::abs(pi.sum() - 1.0) > 1e-12) {
    fail(ErrorKind::invalid_input, "stationary vector must have one entry per state and sum to one");
  }
  if ((pi.array() <= 0.0).any()) {
    fail(ErrorKind::invalid_input, "stationary distribution has non-positive entries");
  }
  if ((pi.transpose() * P - pi.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    fail(ErrorKind::invalid_input, "stationary vector check failed");
  }
  ChainFixture f;
  f.states = std::move(states);
  f.P = std::move(P);
  f.pi = std::move(pi);
  for (Eigen::Index s = 0; s < m; ++s) f.log_mass.push_back(std::log(f.pi(s)));
  return f;
}

ChainFixture adversarial_two_island_fixture(double epsilon, double cross_proposal) {
  if (!(epsilon > 0.0 && epsilon < 0.5)) {
    fail(ErrorKind::invalid_input, "epsilon must lie in (0, 0.5)");
  }
  if (!(cross_proposal > 0.0 && cross_proposal < 1.0)) {
    fail(ErrorKind::invalid_input, "cross_proposal must lie in (0, 1)");
  }
  std::vector<StateKey> states;
  std::vector<int> island;
  for (const Allocation& a : enumerate_partitions(5)) {
    states.push_back(a.key());
    island.push_back(a.same_cluster(0, 1) ? 0 : 1);
  }
  const auto m = static_cast<Eigen::Index>(states.size());
  const auto minor_count = std::count(island.begin(), island.end(), 0);
  const auto major_count = m - minor_count;

  Eigen::VectorXd target(m);
  double zipf_total = 0.0;
  for (Eigen::Index s = 0, rank = 1; s < m; ++s) {
    if (island[static_cast<std::size_t>(s)] == 1) zipf_total += 1.0 / static_cast<double>(rank++);
  }
  for (Eigen::Index s = 0, rank = 1; s < m; ++s) {
    if (island[static_cast<std::size_t>(s)] == 0) {
      target(s) = epsilon / static_cast<double>(minor_count);
    } else {
      target(s) = (1.0 - epsilon) / static_cast<double>(rank++) / zipf_total;
    }
  }

  // Metropolis-Hastings: the cross proposal is uniform over the other
  // island, so it is not symmetric when the islands differ in size.
  auto proposal = [&](Eigen::Index i, Eigen::Index j) {
    const int from = island[static_cast<std::size_t>(i)];
    const int to = island[static_cast<std::size_t>(j)];
    const double count = static_cast<double>(to == 0 ? minor_count : major_count);
    return (from == to ? 1.0 - cross_proposal : cross_proposal) / count;
  };
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j == i) continue;
      const double q_ij = proposal(i, j);
      P(i, j) = q_ij * std::min(1.0, target(j) * proposal(j, i) / (target(i) * q_ij));
    }
    P(i, i) = 1.0 - P.row(i).sum();
  }
  // The spectral gap is of order cross_proposal, which makes an eigensolver
  // inaccurate here. Detailed balance makes the target exactly stationary.
  ChainFixture f = make_fixture(std::move(states), std::move(P), target);
  f.island = std::move(island);
  return f;
}

PartitionScheme island_pair_scheme(const ChainFixture& fixture, int K) {
  if (fixture.island.empty()) fail(ErrorKind::invalid_input, "fixture has no islands");
  std::vector<std::size_t> minor, major;
  for (std::size_t s = 0; s < fixture.states.size(); ++s) {
    (fixture.island[s] == 0 ? minor : major).push_back(s);
  }
  auto by_mass = [&](std::size_t a, std::size_t b) {
    if (fixture.log_mass[a] != fixture.log_mass[b]) {
      return fixture.log_mass[a] > fixture.log_mass[b];
    }
    return fixture.states[a] < fixture.states[b];
  };
  std::sort(minor.begin(), minor.end(), by_mass);
  std::sort(major.begin(), major.end(), by_mass);
  const std::size_t limit = std::min(minor.size(), major.size());
  if (K < 2 || static_cast<std::size_t>(K) >= limit) {
    fail(ErrorKind::insufficient_states,
         "island pair scheme needs 2 <= K < " + std::to_string(limit));
  }
  std::vector<std::vector<StateKey>> sets;
  std::unordered_map<StateKey, double> masses;
  for (int k = 0; k < K; ++k) {
    const std::size_t a = minor[static_cast<std::size_t>(k)];
    const std::size_t b = major[static_cast<std::size_t>(k)];
    sets.push_back({fixture.states[a], fixture.states[b]});
    masses.emplace(fixture.states[a], fixture.log_mass[a]);
    masses.emplace(fixture.states[b], fixture.log_mass[b]);
  }
  return make_scheme(std::move(sets), [&](const StateKey& key) { return masses.at(key); });
}

Trace simulate_fixture_chain(const ChainFixture& fixture, std::size_t n,
                             std::size_t start, std::uint64_t seed) {
  const std::size_t m = fixture.states.size();
  if (start >= m) fail(ErrorKind::invalid_input, "start state out of range");
  std::vector<std::vector<double>> cumulative(m, std::vector<double>(m));
  for (std::size_t i = 0; i < m; ++i) {
    double run = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      run += fixture.P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      cumulative[i][j] = run;
    }
  }
  Rng rng = make_rng(seed);
  Trace trace;
  std::size_t state = start;
  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0) {
      const auto& row = cumulative[state];
      const double u = uniform01(rng) * row.back();
      state = static_cast<std::size_t>(std::upper_bound(row.begin(), row.end(), u) - row.begin());
      state = std::min(state, m - 1);
    }
    trace.push_lazy(fixture.states[state], [&] { return fixture.log_mass[state]; });
  }
  trace.meta["source"] = "fixture";
  trace.meta["seed"] = std::to_string(seed);
  return trace;
}

double total_variation(const Trace& trace, const MassTable& table) {
  if (trace.empty()) fail(ErrorKind::invalid_input, "empty trace");
  std::vector<double> counts(trace.num_distinct(), 0.0);
  for (auto idx : trace.path()) counts[idx] += 1.0;
  const double n = static_cast<double>(trace.size());
  double tv = 0.0;
  std::vector<char> seen(trace.num_distinct(), 0);
  for (std::size_t s = 0; s < table.size(); ++s) {
    const double p = std::exp(table.log_mass[s] - table.log_Z);
    const long idx = trace.find(table.states[s]);
    double f = 0.0;
    if (idx >= 0) {
      f = counts[static_cast<std::size_t>(idx)] / n;
      seen[static_cast<std::size_t>(idx)] = 1;
    }
    tv += std::abs(p - f);
  }
  for (std::size_t s = 0; s < counts.size(); ++s) {
    if (!seen[s]) tv += counts[s] / n;
  }
  return 0.5 * tv;
}

}  // namespace rsclust
