#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "rsclust/partition.hpp"
#include "rsclust/regen.hpp"
#include "rsclust/trace.hpp"

namespace rsclust {

/// K disjoint sets of states (the remainder is implicit) with their
/// unnormalized masses q_i. Masses are stored relative to exp(log_shift)
/// so they stay representable; log_q keeps the unshifted values.
struct PartitionScheme {
  std::vector<std::vector<StateKey>> sets;
  Eigen::VectorXd q;
  Eigen::VectorXd log_q;
  double log_shift = 0.0;

  int K() const noexcept { return static_cast<int>(sets.size()); }
};

/// Builds a scheme from explicit sets. `log_mass` gives the log
/// unnormalized posterior of any state in the sets.
PartitionScheme make_scheme(std::vector<std::vector<StateKey>> sets,
                            const std::function<double(const StateKey&)>& log_mass);

/// Singleton sets for the K visited states with the highest cached log
/// posterior; ties go to the lexicographically smaller key.
PartitionScheme top_k_scheme(const Trace& trace, int K);

struct DiagnosticResult {
  Eigen::VectorXd g_bar;
  Eigen::MatrixXd sigma_hat;
  double z_inv_hat = 0.0;      // on the unshifted mass scale
  double log_z_inv_hat = 0.0;
  Eigen::VectorXd weights;
  double t2 = 0.0;
  double t2_projection = 0.0;  // same statistic via the A(S) projection
  int dof = 0;
  double p_value = 1.0;
  int R = 0;
  int K = 0;
  double condition_number = 0.0;
  std::vector<int> unvisited;  // 0-based set indices never visited
  std::vector<std::string> warnings;
};

/// Hotelling-RS statistic with its chi-square(K-1) p-value.
///
/// Sets never visited in the tour window are reported in `unvisited`,
/// keep g_bar = 0 and weight 0, and are left out of the quadratic form,
/// so the test runs on the visited sets with K' - 1 degrees of freedom.
/// Throws insufficient_states if fewer than two sets were visited and
/// insufficient_regeneration if R < K' + 1 or the covariance estimate is
/// singular or has condition number above 1e12.
DiagnosticResult hotelling_rs(const Trace& trace, const Tours& tours,
                              const PartitionScheme& scheme);

/// The statistic from given moments: g_bar (K), sigma_hat (K x K) and R.
/// Applies the same conditioning guard as hotelling_rs; all sets count as
/// visited.
DiagnosticResult hotelling_from_moments(const Eigen::VectorXd& g_bar,
                                        const Eigen::MatrixXd& sigma_hat, int R);

/// Upper tail of the chi-square distribution, Q(dof/2, x/2).
double chi2_upper_tail(double x, int dof);

/// se(rho_ij) / max(rho_ij, 1 - rho_ij) for the co-cluster indicator of
/// observations i and j (0-based), se from the univariate regenerative
/// variance divided by sqrt(R).
double cv_diagnostic(const Trace& trace, const Tours& tours, int i, int j);

struct CvSummary {
  Eigen::MatrixXd cv;  // N x N, zero diagonal
  double max_cv = 0.0;
  int argmax_i = 0;
  int argmax_j = 0;
};

/// CV for every pair of observations.
CvSummary cv_all_pairs(const Trace& trace, const Tours& tours);

}  // namespace rsclust
