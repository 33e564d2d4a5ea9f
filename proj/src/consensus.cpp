#include "rsclust/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rsclust/errors.hpp"

namespace rsclust {

ConsensusMatrix co_occurrence_rs(const Trace& trace, const Tours& tours) {
  if (tours.R < 2) {
    fail(ErrorKind::insufficient_regeneration, "consensus standard errors need R >= 2");
  }
  const int n = static_cast<int>(trace.state(0).str().size());
  ConsensusMatrix out;
  out.rho = Eigen::MatrixXd::Identity(n, n);
  out.se = Eigen::MatrixXd::Zero(n, n);
  if (n < 2) return out;
  const RsEstimate est =
      rs_estimate(trace, tours, GSpec::all_co_cluster_pairs(n), true);
  Eigen::Index k = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j, ++k) {
      out.rho(i, j) = out.rho(j, i) = est.mean(k);
      out.se(i, j) = out.se(j, i) = std::sqrt(est.cov(k, 0) / est.R);
    }
  }
  return out;
}

MapState map_allocation(const Trace& trace) {
  if (trace.empty()) fail(ErrorKind::invalid_input, "empty trace");
  const auto& keys = trace.distinct_states();
  const auto& lp = trace.distinct_log_post();
  std::size_t best = 0;
  for (std::size_t s = 1; s < keys.size(); ++s) {
    if (lp[s] > lp[best] || (lp[s] == lp[best] && keys[s] < keys[best])) best = s;
  }
  return {keys[best].allocation(), keys[best], lp[best]};
}

std::vector<std::pair<int, double>> cumulative_mass_curve(
    const std::vector<std::pair<StateKey, double>>& table) {
  if (table.empty()) fail(ErrorKind::invalid_input, "empty mass table");
  std::vector<std::size_t> order(table.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (table[a].second != table[b].second) return table[a].second > table[b].second;
    return table[a].first < table[b].first;
  });
  const double hi = table[order.front()].second;
  std::vector<double> w(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    w[r] = std::exp(table[order[r]].second - hi);
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<std::pair<int, double>> curve;
  curve.reserve(order.size());
  double running = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    running += w[r];
    curve.emplace_back(static_cast<int>(r) + 1, running / total);
  }
  return curve;
}

}  // namespace rsclust
