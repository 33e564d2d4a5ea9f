#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rsclust/errors.hpp"
#include "rsclust/partition.hpp"
#include "rsclust/trace.hpp"

namespace rsclust {

/// Regeneration structure of a trace for a return state delta.
/// `tau` holds 1-based trace positions of the visits to delta.
struct Tours {
  StateKey delta;
  std::vector<std::size_t> tau;
  int R = 0;
  std::vector<std::size_t> lengths;  // N_r = tau_r - tau_{r-1}
  double mean_length = 0.0;

  /// 0-based half-open window [tau_0, tau_R) covered by complete tours.
  std::size_t window_begin() const { return tau.front() - 1; }
  std::size_t window_end() const { return tau.back() - 1; }
  std::size_t window_size() const { return tau.back() - tau.front(); }
};

/// Splits the first `limit` states of the trace (default all) into tours
/// between successive visits to delta. Throws insufficient_regeneration
/// if delta is visited fewer than twice.
Tours find_tours(const Trace& trace, const StateKey& delta,
                 std::size_t limit = static_cast<std::size_t>(-1));

/// Most visited state among the first `limit` states; ties go to the
/// lexicographically smallest key.
StateKey most_visited_state(const Trace& trace,
                            std::size_t limit = static_cast<std::size_t>(-1));

/// Vector-valued function of the state, g : S -> R^K.
class GSpec {
 public:
  using Fn = std::function<Eigen::VectorXd(const StateKey&)>;

  GSpec(int dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}

  int dim() const noexcept { return dim_; }
  Eigen::VectorXd operator()(const StateKey& key) const;

  /// K x (distinct states) table of g over the trace's visited states.
  Eigen::MatrixXd tabulate(const Trace& trace) const;

  static GSpec indicator(const StateKey& state);
  static GSpec constant(const Eigen::VectorXd& value);
  /// Co-cluster indicator of observations i and j (0-based).
  static GSpec co_cluster(int i, int j);
  /// Co-cluster indicators for all pairs i < j, row-major over pairs.
  static GSpec all_co_cluster_pairs(int n);

 private:
  int dim_;
  Fn fn_;
};

struct RsEstimate {
  Eigen::VectorXd mean;  // g-bar over the tour window
  Eigen::MatrixXd cov;   // regenerative covariance estimate (empty if R < 2)
  int R = 0;
};

/// Regenerative-sampling mean and covariance from a table of g values
/// (K x distinct states) and the trace path of state indices.
///
/// mean = (tau_R - tau_0)^-1 sum_{t in window} g(X_t)
/// cov  = (R Nbar^2)^-1 sum_r (s_r - N_r mean)(s_r - N_r mean)'
///
/// The covariance is accumulated in two passes: mean first, then centred
/// tour sums. With `diagonal_only` only the variances are filled.
template <typename Derived>
RsEstimate rs_estimate(std::span<const std::uint32_t> path, const Tours& tours,
                       const Eigen::MatrixBase<Derived>& table,
                       bool diagonal_only = false) {
  using Index = Eigen::Index;
  if (tours.R < 1 || tours.tau.size() < 2) {
    fail(ErrorKind::insufficient_regeneration, "need at least one complete tour");
  }
  const Index k = table.rows();
  RsEstimate out;
  out.R = tours.R;

  // Pass 1: visit counts over the window, then the mean.
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(table.cols());
  for (std::size_t t = tours.window_begin(); t < tours.window_end(); ++t) {
    counts(path[t]) += 1.0;
  }
  out.mean = (table.template cast<double>() * counts) /
             static_cast<double>(tours.window_size());

  if (tours.R < 2) return out;

  // Pass 2: centred tour sums, accumulated with Kahan compensation.
  out.cov = Eigen::MatrixXd::Zero(k, diagonal_only ? 1 : k);
  Eigen::MatrixXd carry = Eigen::MatrixXd::Zero(k, diagonal_only ? 1 : k);
  Eigen::MatrixXd term(k, diagonal_only ? 1 : k);
  Eigen::VectorXd tour_sum(k);
  for (int r = 1; r <= tours.R; ++r) {
    const std::size_t begin = tours.tau[static_cast<std::size_t>(r - 1)] - 1;
    const std::size_t end = tours.tau[static_cast<std::size_t>(r)] - 1;
    tour_sum.setZero();
    for (std::size_t t = begin; t < end; ++t) {
      tour_sum += table.col(path[t]).template cast<double>();
    }
    tour_sum -= static_cast<double>(end - begin) * out.mean;
    if (diagonal_only) {
      term.col(0) = tour_sum.cwiseAbs2();
    } else {
      term.noalias() = tour_sum * tour_sum.transpose();
    }
    term -= carry;
    const Eigen::MatrixXd next = out.cov + term;
    carry = (next - out.cov) - term;
    out.cov = next;
  }
  const double scale = 1.0 / (tours.R * tours.mean_length * tours.mean_length);
  out.cov *= scale;
  if (!diagonal_only) out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

Eigen::VectorXd rs_mean(const Trace& trace, const Tours& tours, const GSpec& g);

/// Throws insufficient_regeneration if R < 2.
Eigen::MatrixXd rs_cov(const Trace& trace, const Tours& tours, const GSpec& g);

/// Mean and covariance in one pass over the tabulated g.
RsEstimate rs_estimate(const Trace& trace, const Tours& tours, const GSpec& g,
                       bool diagonal_only = false);

}  // namespace rsclust
