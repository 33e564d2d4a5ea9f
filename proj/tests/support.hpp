#pragma once

// Independent oracles used by the tests. Nothing here calls the collapsed
// likelihood code; block densities are built from explicit covariance or
// precision matrices.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "rsclust/model.hpp"
#include "rsclust/partition.hpp"
#include "rsclust/rng.hpp"
#include "rsclust/trace.hpp"

namespace oracle {

inline double logaddexp(double a, double b) {
  const double hi = std::max(a, b);
  return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
}

inline double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::VectorXd z = llt.matrixL().solve(x);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi) + logdet +
                 z.squaredNorm());
}

inline double normal_logpdf(double x, double mean, double var) {
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + (x - mean) * (x - mean) / var);
}

// Replicates of variable v for the members of one cluster, with the owning
// member (0..m-1) of each replicate.
struct Block {
  Eigen::VectorXd y;
  std::vector<int> member;
  int members = 0;
};

inline std::vector<Block> blocks_of(const rsclust::DataMatrix& data,
                                    const rsclust::Allocation& alloc, int v) {
  std::vector<Block> out;
  for (const auto& cluster : alloc.clusters()) {
    Block b;
    b.members = static_cast<int>(cluster.size());
    std::vector<double> ys;
    for (int m = 0; m < b.members; ++m) {
      for (int c = 0; c < data.num_columns(); ++c) {
        if (data.unit_of(c) == cluster[static_cast<std::size_t>(m)]) {
          ys.push_back(data.values()(v, c));
          b.member.push_back(m);
        }
      }
    }
    b.y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
    out.push_back(std::move(b));
  }
  return out;
}

// Block marginal under fixed gamma from the full covariance matrix.
inline double dense_block(const Block& b, const rsclust::HyperParams& h, int gamma) {
  const auto n = b.y.size();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(n, n, gamma * h.sigma2_theta);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index s = 0; s < n; ++s) {
      if (b.member[static_cast<std::size_t>(r)] == b.member[static_cast<std::size_t>(s)]) {
        cov(r, s) += h.sigma2_eta;
      }
    }
    cov(r, r) += h.sigma2;
  }
  return mvn_logpdf(b.y.array() - h.mu, cov);
}

inline double dense_log_marglik(const rsclust::DataMatrix& data,
                                const rsclust::Allocation& alloc,
                                const rsclust::HyperParams& h) {
  double total = 0.0;
  for (int v = 0; v < data.num_variables(); ++v) {
    for (const Block& b : blocks_of(data, alloc, v)) {
      total += logaddexp(std::log(h.p) + dense_block(b, h, 1),
                         std::log1p(-h.p) + dense_block(b, h, 0));
    }
  }
  return total;
}

// Chib's identity for one block at latent point (gamma, theta, eta):
//   log m = log f(y | latent) + log prior(latent) - log post(latent | y)
// The posterior of (theta, eta) given gamma is Gaussian with precision
// prior + X'X / sigma2; the posterior of gamma comes from the same identity
// applied to each gamma separately.
inline double chib_continuous(const Block& b, const rsclust::HyperParams& h, int gamma,
                              const Eigen::VectorXd& latent) {
  const auto n = b.y.size();
  const auto k = static_cast<Eigen::Index>(b.members) + 1;  // theta then eta_i
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index r = 0; r < n; ++r) {
    X(r, 0) = gamma;
    X(r, 1 + b.member[static_cast<std::size_t>(r)]) = 1.0;
  }
  Eigen::VectorXd prior_var = Eigen::VectorXd::Constant(k, h.sigma2_eta);
  prior_var(0) = h.sigma2_theta;
  const Eigen::VectorXd resid = b.y.array() - h.mu;

  double log_lik = 0.0;
  const Eigen::VectorXd fitted = X * latent;
  for (Eigen::Index r = 0; r < n; ++r) log_lik += normal_logpdf(resid(r), fitted(r), h.sigma2);
  double log_prior = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) log_prior += normal_logpdf(latent(j), 0.0, prior_var(j));

  Eigen::MatrixXd Q = X.transpose() * X / h.sigma2;
  Q.diagonal() += prior_var.cwiseInverse();
  const Eigen::VectorXd mean = Q.ldlt().solve(X.transpose() * resid / h.sigma2);
  const Eigen::MatrixXd cov = Q.inverse();
  const double log_post = mvn_logpdf(latent - mean, cov);
  return log_lik + log_prior - log_post;
}

inline double chib_block(const Block& b, const rsclust::HyperParams& h, int gamma,
                         const Eigen::VectorXd& latent) {
  const double m0 = chib_continuous(b, h, 0, latent);
  const double m1 = chib_continuous(b, h, 1, latent);
  const double lp0 = std::log1p(-h.p) + m0;
  const double lp1 = std::log(h.p) + m1;
  const double log_evidence_gamma = logaddexp(lp0, lp1);
  // Full-latent identity: f(y | gamma, latent) p(gamma) p(latent)
  //                      / [p(gamma | y) p(latent | gamma, y)]
  const double log_post_gamma = (gamma == 1 ? lp1 : lp0) - log_evidence_gamma;
  const double m_gamma = gamma == 1 ? m1 : m0;
  const double log_prior_gamma = gamma == 1 ? std::log(h.p) : std::log1p(-h.p);
  return m_gamma + log_prior_gamma - log_post_gamma;
}

inline double chib_log_marglik(const rsclust::DataMatrix& data,
                               const rsclust::Allocation& alloc,
                               const rsclust::HyperParams& h, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  double total = 0.0;
  for (int v = 0; v < data.num_variables(); ++v) {
    for (const Block& b : blocks_of(data, alloc, v)) {
      Eigen::VectorXd latent(b.members + 1);
      for (Eigen::Index j = 0; j < latent.size(); ++j) latent(j) = 2.0 * nd(rng);
      total += chib_block(b, h, coin(rng) ? 1 : 0, latent);
    }
  }
  return total;
}

// Direct evaluation of (C-1)! prod N_c! / (N (N+C-1)!).
inline double prior_direct(const rsclust::Allocation& a) {
  const int n = a.size();
  const int c = a.num_clusters();
  double v = std::lgamma(c) - std::log(n) - std::lgamma(n + c);
  for (int s : a.cluster_sizes()) v += std::lgamma(s + 1.0);
  return v;
}

inline rsclust::DataMatrix random_data(int n, int V, int max_reps, std::mt19937_64& rng,
                                       double scale = 1.0) {
  std::uniform_int_distribution<int> reps(1, max_reps);
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<int> unit_of;
  for (int i = 0; i < n; ++i) {
    const int r = reps(rng);
    for (int k = 0; k < r; ++k) unit_of.push_back(i);
  }
  Eigen::MatrixXd values(V, static_cast<Eigen::Index>(unit_of.size()));
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    for (int v = 0; v < V; ++v) values(v, c) = nd(rng);
  }
  return rsclust::DataMatrix(values, unit_of);
}

inline rsclust::HyperParams random_hyper(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return {u(rng) - 0.5, 0.2 + u(rng), 0.1 + u(rng), 0.2 + 3.0 * u(rng), 0.05 + 0.9 * u(rng)};
}

inline rsclust::Allocation random_allocation(int n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> lab(1, n);
  std::vector<int> raw(static_cast<std::size_t>(n));
  for (auto& x : raw) x = lab(rng);
  return rsclust::canonicalize(raw);
}

// Probabilities by state key from a list of log masses.
inline std::map<std::string, double> normalize(const std::vector<rsclust::StateKey>& states,
                                               const std::vector<double>& log_mass) {
  const double hi = *std::max_element(log_mass.begin(), log_mass.end());
  double z = 0.0;
  for (double x : log_mass) z += std::exp(x - hi);
  std::map<std::string, double> out;
  for (std::size_t s = 0; s < states.size(); ++s) {
    out[states[s].str()] = std::exp(log_mass[s] - hi) / z;
  }
  return out;
}

inline double tv(const std::map<std::string, double>& p, const std::map<std::string, double>& q) {
  double d = 0.0;
  for (const auto& [k, v] : p) {
    auto it = q.find(k);
    d += std::abs(v - (it == q.end() ? 0.0 : it->second));
  }
  for (const auto& [k, v] : q) {
    if (!p.count(k)) d += std::abs(v);
  }
  return 0.5 * d;
}

inline std::map<std::string, double> frequencies(const std::vector<std::string>& draws) {
  std::map<std::string, double> out;
  for (const auto& d : draws) out[d] += 1.0;
  for (auto& [k, v] : out) v /= static_cast<double>(draws.size());
  return out;
}

// Kolmogorov-Smirnov distance of a sample from Uniform(0, 1).
inline double ks_uniform(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - x[i], x[i] - static_cast<double>(i) / n});
  }
  return d;
}

// Draws an index from normalized probabilities by inversion.
class Categorical {
 public:
  explicit Categorical(const std::vector<double>& p) : cum_(p.size()) {
    double run = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) cum_[i] = (run += p[i]);
  }
  std::size_t operator()(std::mt19937_64& rng) const {
    const double u = std::uniform_real_distribution<double>(0.0, cum_.back())(rng);
    return std::min<std::size_t>(
        static_cast<std::size_t>(std::upper_bound(cum_.begin(), cum_.end(), u) - cum_.begin()),
        cum_.size() - 1);
  }

 private:
  std::vector<double> cum_;
};

// Shared synthetic datasets. Each pairs data with the hyperparameters used
// as the sampling target.
struct Dataset {
  rsclust::DataMatrix data;
  rsclust::HyperParams hyper;
};

inline Dataset n4_data() {
  const rsclust::HyperParams h{0.0, 0.5, 0.3, 1.5, 0.5};
  const std::vector<int> reps{2, 2, 2, 2};
  return {rsclust::simulate_data(h, rsclust::Allocation::from_canonical({1, 1, 2, 3}), 3, reps, 4),
          h};
}

// Top state about 0.55, then 0.10 and 0.07.
inline Dataset n5_data() {
  const rsclust::HyperParams h{0.0, 0.5, 0.3, 1.5, 0.5};
  const std::vector<int> reps(5, 2);
  return {rsclust::simulate_data(h, rsclust::Allocation::from_canonical({1, 1, 2, 2, 3}), 3, reps,
                                 1),
          h};
}

// Every one of the 52 partitions carries mass above 1e-3.
inline Dataset n5_flat_data() {
  Eigen::MatrixXd v(3, 5);
  v << -0.361, 3.184, 0.432, 0.568, -3.420,
        1.137, -2.610, 3.004, -0.075, -1.964,
       -1.793, 1.157, 2.648, -2.394, 1.458;
  return {rsclust::DataMatrix(v, {0, 1, 2, 3, 4}), {0.0, 1.0, 0.2, 1.0, 0.5}};
}

// N=8, V=10, two replicates; spread posterior (top state about 0.35).
inline Dataset n8_data() {
  const rsclust::HyperParams h{0.0, 0.5, 0.3, 1.0, 0.5};
  const std::vector<int> reps(8, 2);
  return {rsclust::simulate_data(h, rsclust::Allocation::from_canonical({1, 1, 1, 2, 2, 2, 3, 3}),
                                 10, reps, 1),
          h};
}

}  // namespace oracle
