#include "rsclust/regen.hpp"

#include <algorithm>

namespace rsclust {

Tours find_tours(const Trace& trace, const StateKey& delta, std::size_t limit) {
  const std::size_t end = std::min(limit, trace.size());
  Tours tours;
  tours.delta = delta;
  const long idx = trace.find(delta);
  if (idx >= 0) {
    const auto target = static_cast<std::uint32_t>(idx);
    const auto path = trace.path();
    for (std::size_t t = 0; t < end; ++t) {
      if (path[t] == target) tours.tau.push_back(t + 1);
    }
  }
  if (tours.tau.size() < 2) {
    fail(ErrorKind::insufficient_regeneration,
         "return state " + delta.str() + " visited " +
             std::to_string(tours.tau.size()) + " time(s); need at least 2");
  }
  tours.R = static_cast<int>(tours.tau.size()) - 1;
  for (std::size_t r = 1; r < tours.tau.size(); ++r) {
    tours.lengths.push_back(tours.tau[r] - tours.tau[r - 1]);
  }
  tours.mean_length = static_cast<double>(tours.window_size()) / tours.R;
  return tours;
}

StateKey most_visited_state(const Trace& trace, std::size_t limit) {
  const std::size_t end = std::min(limit, trace.size());
  if (end == 0) fail(ErrorKind::invalid_input, "empty trace");
  std::vector<std::size_t> counts(trace.num_distinct(), 0);
  const auto path = trace.path();
  for (std::size_t t = 0; t < end; ++t) ++counts[path[t]];
  const auto& keys = trace.distinct_states();
  std::size_t best = 0;
  for (std::size_t s = 1; s < counts.size(); ++s) {
    if (counts[s] > counts[best] ||
        (counts[s] == counts[best] && counts[s] > 0 && keys[s] < keys[best])) {
      best = s;
    }
  }
  return keys[best];
}

Eigen::VectorXd GSpec::operator()(const StateKey& key) const {
  Eigen::VectorXd v = fn_(key);
  if (v.size() != dim_) {
    fail(ErrorKind::invalid_input, "g returned a vector of the wrong length");
  }
  return v;
}

Eigen::MatrixXd GSpec::tabulate(const Trace& trace) const {
  const auto& keys = trace.distinct_states();
  Eigen::MatrixXd table(dim_, static_cast<Eigen::Index>(keys.size()));
  for (std::size_t s = 0; s < keys.size(); ++s) {
    table.col(static_cast<Eigen::Index>(s)) = (*this)(keys[s]);
    if (!table.col(static_cast<Eigen::Index>(s)).allFinite()) {
      fail(ErrorKind::invalid_input, "g is not finite at state " + keys[s].str());
    }
  }
  return table;
}

GSpec GSpec::indicator(const StateKey& state) {
  return GSpec(1, [state](const StateKey& key) {
    return Eigen::VectorXd::Constant(1, key == state ? 1.0 : 0.0);
  });
}

GSpec GSpec::constant(const Eigen::VectorXd& value) {
  return GSpec(static_cast<int>(value.size()),
               [value](const StateKey&) { return value; });
}

GSpec GSpec::co_cluster(int i, int j) {
  return GSpec(1, [i, j](const StateKey& key) {
    const std::string& d = key.str();
    return Eigen::VectorXd::Constant(
        1, d.at(static_cast<std::size_t>(i)) == d.at(static_cast<std::size_t>(j)) ? 1.0 : 0.0);
  });
}

GSpec GSpec::all_co_cluster_pairs(int n) {
  return GSpec(n * (n - 1) / 2, [n](const StateKey& key) {
    const std::string& d = key.str();
    if (static_cast<int>(d.size()) != n) {
      fail(ErrorKind::invalid_input, "state key length does not match N");
    }
    Eigen::VectorXd v(n * (n - 1) / 2);
    Eigen::Index k = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        v(k++) = d[static_cast<std::size_t>(i)] == d[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
      }
    }
    return v;
  });
}

RsEstimate rs_estimate(const Trace& trace, const Tours& tours, const GSpec& g,
                       bool diagonal_only) {
  return rs_estimate(trace.path(), tours, g.tabulate(trace), diagonal_only);
}

Eigen::VectorXd rs_mean(const Trace& trace, const Tours& tours, const GSpec& g) {
  if (tours.R < 1) {
    fail(ErrorKind::insufficient_regeneration, "need at least one complete tour");
  }
  const Eigen::MatrixXd table = g.tabulate(trace);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(table.cols());
  const auto path = trace.path();
  for (std::size_t t = tours.window_begin(); t < tours.window_end(); ++t) {
    counts(path[t]) += 1.0;
  }
  return table * counts / static_cast<double>(tours.window_size());
}

Eigen::MatrixXd rs_cov(const Trace& trace, const Tours& tours, const GSpec& g) {
  if (tours.R < 2) {
    fail(ErrorKind::insufficient_regeneration,
         "covariance needs R >= 2 tours, have " + std::to_string(tours.R));
  }
  return rs_estimate(trace, tours, g).cov;
}

}  // namespace rsclust
