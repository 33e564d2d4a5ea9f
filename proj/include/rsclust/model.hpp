#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rsclust/partition.hpp"

namespace rsclust {

/// Empirical-Bayes hyperparameters of the spike-slab model.
struct HyperParams {
  double mu = 0.0;
  double sigma2 = 1.0;        // between-replicate variance
  double sigma2_eta = 1.0;    // between-observation variance
  double sigma2_theta = 1.0;  // slab variance of the cluster mean shift
  double p = 0.5;             // slab probability

  /// Throws invalid_hyperparameter unless all variances > 0 and 0 < p < 1.
  void validate() const;

  friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

inline constexpr std::array<const char*, 5> kHyperNames = {
    "mu", "sigma2", "sigma2_eta", "sigma2_theta", "p"};

/// Replicated measurements: V variables by total replicate columns, each
/// column belonging to one of N observations.
class DataMatrix {
 public:
  DataMatrix() = default;

  /// `values` is V x columns; `unit_of[col]` is a 0-based observation index.
  /// Every observation needs at least one column; values must be finite.
  DataMatrix(Eigen::MatrixXd values, std::vector<int> unit_of,
             std::vector<std::string> observation_ids = {},
             std::vector<std::string> variable_names = {});

  int num_variables() const noexcept { return static_cast<int>(values_.rows()); }
  int num_observations() const noexcept { return static_cast<int>(counts_.size()); }
  int num_columns() const noexcept { return static_cast<int>(values_.cols()); }

  const Eigen::MatrixXd& values() const noexcept { return values_; }
  int unit_of(int column) const { return unit_of_[static_cast<std::size_t>(column)]; }
  std::span<const int> units() const noexcept { return unit_of_; }
  int replicate_count(int obs) const { return counts_[static_cast<std::size_t>(obs)]; }

  const std::vector<std::string>& observation_ids() const noexcept { return ids_; }
  const std::vector<std::string>& variable_names() const noexcept { return names_; }

  /// Per-(variable, observation) replicate mean and within sum of squares.
  const Eigen::MatrixXd& means() const noexcept { return means_; }
  const Eigen::MatrixXd& within_ss() const noexcept { return within_ss_; }

 private:
  Eigen::MatrixXd values_;
  std::vector<int> unit_of_;
  std::vector<int> counts_;
  std::vector<std::string> ids_;
  std::vector<std::string> names_;
  Eigen::MatrixXd means_;
  Eigen::MatrixXd within_ss_;
};

/// Log of (C-1)! N_1! ... N_C! / (N (N+C-1)!), unnormalized over partitions.
double log_prior(const Allocation& alloc);

/// Collapsed form of the spike-slab likelihood for fixed hyperparameters.
///
/// Within a (variable, cluster) block the replicate vector is Gaussian with
/// covariance sigma2*I + sigma2_eta*(per-observation ones) + gamma *
/// sigma2_theta*(block ones). Marginalizing gamma gives a two-component
/// mixture. The rank-one slab term only enters through two block
/// statistics, both additive over member observations:
///
///   A   = sum_i n_i / (sigma2 + n_i sigma2_eta)
///   B_v = sum_i n_i (ybar_vi - mu) / (sigma2 + n_i sigma2_eta)
///
/// A depends only on replicate counts, so it is shared by all variables.
/// The spike part is a per-observation constant independent of clustering.
class MarginalModel {
 public:
  MarginalModel(const DataMatrix& data, const HyperParams& hyper);

  const DataMatrix& data() const noexcept { return *data_; }
  const HyperParams& hyper() const noexcept { return hyper_; }
  int num_observations() const noexcept { return data_->num_observations(); }
  int num_variables() const noexcept { return data_->num_variables(); }

  /// Sum over observations of the spike-only log density.
  double spike_constant() const noexcept { return spike_constant_; }

  double obs_weight(int obs) const { return weight_[obs]; }
  auto obs_score(int obs) const { return score_.col(obs); }

  /// Sum over variables of log[(1-p) + p exp(h(A, B_v))] for one cluster.
  double cluster_loglik(double a, const Eigen::Ref<const Eigen::VectorXd>& b) const;

  double log_marglik(const Allocation& alloc) const;
  double log_posterior(const Allocation& alloc) const {
    return log_prior(alloc) + log_marglik(alloc);
  }

  /// Gradient of log_marglik in natural coordinates
  /// (mu, sigma2, sigma2_eta, sigma2_theta, p).
  Eigen::Matrix<double, 5, 1> log_marglik_gradient(const Allocation& alloc) const;

 private:
  const DataMatrix* data_;
  HyperParams hyper_;
  double log_p_;
  double log_1mp_;
  double spike_constant_ = 0.0;
  Eigen::VectorXd weight_;  // per observation: n_i / (sigma2 + n_i sigma2_eta)
  Eigen::MatrixXd score_;   // V x N: weight_i * (ybar_vi - mu)
};

double log_marglik(const DataMatrix& data, const Allocation& alloc,
                   const HyperParams& hyper);

double log_posterior_unnorm(const DataMatrix& data, const Allocation& alloc,
                            const HyperParams& hyper);

/// Empirical-Bayes objective: log marginal likelihood with every
/// observation in its own block, i.e. one mixture unit per
/// (variable, observation).
double eb_objective(const DataMatrix& data, const HyperParams& hyper);

using EbVector = Eigen::Matrix<double, 5, 1>;

/// Unconstrained coordinates (mu, log sigma2, log sigma2_eta,
/// log sigma2_theta, logit p).
EbVector to_transformed(const HyperParams& hyper);
HyperParams from_transformed(const EbVector& phi);

/// Analytic gradient of eb_objective on the transformed scale.
EbVector eb_gradient(const DataMatrix& data, const HyperParams& hyper);

struct EbOptions {
  int starts = 5;
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;
  double p_guard = 1e-6;         // p kept in [p_guard, 1 - p_guard]
  double variance_guard = 1e-10; // variances kept >= variance_guard
  std::uint64_t seed = 1;
};

struct EbIteration {
  int iteration;
  double objective;
  double gradient_norm;
};

struct EbFit {
  HyperParams hyper;
  HyperParams standard_errors;  // delta-method mapped to natural scale
  double objective = 0.0;
  double init_objective = 0.0;
  int iterations = 0;
  int best_start = 0;
  std::vector<std::string> boundary_hits;  // parameter names at a guard
  std::vector<EbIteration> trace;          // ascent path of the best start
};

/// Quasi-Newton maximization of eb_objective on the transformed scale with
/// multiple starts. The first start is `init`. Throws optimization_failure
/// if no start converges within max_iterations.
EbFit fit_empirical_bayes(const DataMatrix& data, const HyperParams& init,
                          const EbOptions& options = {});

/// Draws data from the hierarchical model for a given allocation.
/// `replicates[i]` is the replicate count of observation i.
DataMatrix simulate_data(const HyperParams& hyper, const Allocation& alloc,
                         int num_variables, std::span<const int> replicates,
                         std::uint64_t seed);

}  // namespace rsclust
