#include "rsclust/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "rsclust/errors.hpp"
#include "rsclust/rng.hpp"

namespace rsclust {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double log_add_exp(double a, double b) {
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                : std::exp(x) / (1.0 + std::exp(x));
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

}  // namespace

void HyperParams::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!std::isfinite(mu)) {
    fail(ErrorKind::invalid_hyperparameter, "mu must be finite");
  }
  if (!positive(sigma2) || !positive(sigma2_eta) || !positive(sigma2_theta)) {
    fail(ErrorKind::invalid_hyperparameter,
         "variance components must be strictly positive");
  }
  if (!(p > 0.0 && p < 1.0)) {
    fail(ErrorKind::invalid_hyperparameter, "p must lie in (0, 1)");
  }
}

DataMatrix::DataMatrix(Eigen::MatrixXd values, std::vector<int> unit_of,
                       std::vector<std::string> observation_ids,
                       std::vector<std::string> variable_names)
    : values_(std::move(values)),
      unit_of_(std::move(unit_of)),
      ids_(std::move(observation_ids)),
      names_(std::move(variable_names)) {
  if (values_.rows() < 1 || values_.cols() < 1) {
    fail(ErrorKind::invalid_input, "data needs at least one variable and column");
  }
  if (static_cast<Eigen::Index>(unit_of_.size()) != values_.cols()) {
    fail(ErrorKind::invalid_input, "unit_of length does not match column count");
  }
  if (!values_.allFinite()) {
    fail(ErrorKind::invalid_input, "data contains missing or non-finite values");
  }
  int n = 0;
  for (int u : unit_of_) {
    if (u < 0) fail(ErrorKind::invalid_input, "negative observation index");
    n = std::max(n, u + 1);
  }
  counts_.assign(static_cast<std::size_t>(n), 0);
  for (int u : unit_of_) ++counts_[static_cast<std::size_t>(u)];
  for (int i = 0; i < n; ++i) {
    if (counts_[static_cast<std::size_t>(i)] == 0) {
      fail(ErrorKind::invalid_input,
           "observation " + std::to_string(i) + " has no replicate columns");
    }
  }
  if (ids_.empty()) {
    for (int i = 0; i < n; ++i) ids_.push_back("obs" + std::to_string(i + 1));
  }
  if (names_.empty()) {
    for (int v = 0; v < values_.rows(); ++v) {
      names_.push_back("v" + std::to_string(v + 1));
    }
  }
  if (static_cast<int>(ids_.size()) != n ||
      static_cast<Eigen::Index>(names_.size()) != values_.rows()) {
    fail(ErrorKind::invalid_input, "identifier counts do not match data shape");
  }

  const Eigen::Index nv = values_.rows();
  means_ = Eigen::MatrixXd::Zero(nv, n);
  within_ss_ = Eigen::MatrixXd::Zero(nv, n);
  for (Eigen::Index col = 0; col < values_.cols(); ++col) {
    means_.col(unit_of_[static_cast<std::size_t>(col)]) += values_.col(col);
  }
  for (int i = 0; i < n; ++i) means_.col(i) /= counts_[static_cast<std::size_t>(i)];
  for (Eigen::Index col = 0; col < values_.cols(); ++col) {
    const int u = unit_of_[static_cast<std::size_t>(col)];
    within_ss_.col(u) += (values_.col(col) - means_.col(u)).array().square().matrix();
  }
}

double log_prior(const Allocation& alloc) {
  const double n = alloc.size();
  const double c = alloc.num_clusters();
  double sum_log_fact = 0.0;
  for (int size : alloc.cluster_sizes()) sum_log_fact += std::lgamma(size + 1.0);
  return std::lgamma(c) + sum_log_fact - std::log(n) - std::lgamma(n + c);
}

MarginalModel::MarginalModel(const DataMatrix& data, const HyperParams& hyper)
    : data_(&data), hyper_(hyper) {
  hyper_.validate();
  log_p_ = std::log(hyper_.p);
  log_1mp_ = std::log1p(-hyper_.p);

  const int n = data.num_observations();
  const int nv = data.num_variables();
  weight_.resize(n);
  score_.resize(nv, n);
  spike_constant_ = 0.0;
  for (int i = 0; i < n; ++i) {
    const double reps = data.replicate_count(i);
    const double total_var = hyper_.sigma2 + reps * hyper_.sigma2_eta;
    weight_(i) = reps / total_var;
    score_.col(i) = weight_(i) * (data.means().col(i).array() - hyper_.mu).matrix();
    for (int v = 0; v < nv; ++v) {
      const double dev = data.means()(v, i) - hyper_.mu;
      spike_constant_ +=
          -0.5 * (reps * kLog2Pi + (reps - 1.0) * std::log(hyper_.sigma2) +
                  std::log(total_var) + data.within_ss()(v, i) / hyper_.sigma2 +
                  reps * dev * dev / total_var);
    }
  }
}

double MarginalModel::cluster_loglik(
    double a, const Eigen::Ref<const Eigen::VectorXd>& b) const {
  const double s = hyper_.sigma2_theta;
  const double u = 1.0 + s * a;
  const double base = log_p_ - 0.5 * std::log(u);
  const double scale = 0.5 * s / u;
  double total = 0.0;
  for (Eigen::Index v = 0; v < b.size(); ++v) {
    total += log_add_exp(log_1mp_, base + scale * b(v) * b(v));
  }
  return total;
}

double MarginalModel::log_marglik(const Allocation& alloc) const {
  if (alloc.size() != num_observations()) {
    fail(ErrorKind::invalid_input,
         "allocation covers " + std::to_string(alloc.size()) +
             " observations, data has " + std::to_string(num_observations()));
  }
  const int c = alloc.num_clusters();
  Eigen::VectorXd a = Eigen::VectorXd::Zero(c);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(num_variables(), c);
  for (int i = 0; i < alloc.size(); ++i) {
    const int k = alloc[i] - 1;
    a(k) += weight_(i);
    b.col(k) += score_.col(i);
  }
  double total = spike_constant_;
  for (int k = 0; k < c; ++k) total += cluster_loglik(a(k), b.col(k));
  return total;
}

Eigen::Matrix<double, 5, 1> MarginalModel::log_marglik_gradient(
    const Allocation& alloc) const {
  if (alloc.size() != num_observations()) {
    fail(ErrorKind::invalid_input, "allocation does not match data");
  }
  const DataMatrix& data = *data_;
  const double s2 = hyper_.sigma2;
  const double s2e = hyper_.sigma2_eta;
  const double s2t = hyper_.sigma2_theta;
  const double p = hyper_.p;
  const int nv = num_variables();

  double g_mu = 0.0, g_s2 = 0.0, g_s2e = 0.0, g_s2t = 0.0, g_p = 0.0;

  // Spike part, one term per (variable, observation).
  for (int i = 0; i < num_observations(); ++i) {
    const double reps = data.replicate_count(i);
    const double tv = s2 + reps * s2e;
    for (int v = 0; v < nv; ++v) {
      const double m = data.means()(v, i) - hyper_.mu;
      const double w = data.within_ss()(v, i);
      g_mu += reps * m / tv;
      g_s2 += -0.5 * ((reps - 1.0) / s2 + 1.0 / tv - w / (s2 * s2) -
                      reps * m * m / (tv * tv));
      g_s2e += -0.5 * (reps / tv - reps * reps * m * m / (tv * tv));
    }
  }

  // Slab part, one term per (variable, cluster).
  const int c = alloc.num_clusters();
  Eigen::VectorXd a = Eigen::VectorXd::Zero(c);
  Eigen::VectorXd da_s2 = Eigen::VectorXd::Zero(c);
  Eigen::VectorXd da_s2e = Eigen::VectorXd::Zero(c);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(nv, c);
  Eigen::MatrixXd db_s2 = Eigen::MatrixXd::Zero(nv, c);
  Eigen::MatrixXd db_s2e = Eigen::MatrixXd::Zero(nv, c);
  for (int i = 0; i < alloc.size(); ++i) {
    const int k = alloc[i] - 1;
    const double reps = data.replicate_count(i);
    const double tv = s2 + reps * s2e;
    a(k) += weight_(i);
    da_s2(k) -= weight_(i) / tv;
    da_s2e(k) -= reps * weight_(i) / tv;
    b.col(k) += score_.col(i);
    db_s2.col(k) -= score_.col(i) / tv;
    db_s2e.col(k) -= reps * score_.col(i) / tv;
  }
  for (int k = 0; k < c; ++k) {
    const double u = 1.0 + s2t * a(k);
    for (int v = 0; v < nv; ++v) {
      const double bv = b(v, k);
      const double h = -0.5 * std::log(u) + 0.5 * s2t * bv * bv / u;
      const double w1 = sigmoid(log_p_ + h - log_1mp_);
      const double dh_da = -0.5 * s2t / u - 0.5 * s2t * s2t * bv * bv / (u * u);
      const double dh_db = s2t * bv / u;
      const double dh_ds = -0.5 * a(k) / u + 0.5 * bv * bv / (u * u);
      g_mu += w1 * dh_db * (-a(k));
      g_s2 += w1 * (dh_da * da_s2(k) + dh_db * db_s2(v, k));
      g_s2e += w1 * (dh_da * da_s2e(k) + dh_db * db_s2e(v, k));
      g_s2t += w1 * dh_ds;
      g_p += w1 / p - (1.0 - w1) / (1.0 - p);
    }
  }
  Eigen::Matrix<double, 5, 1> g;
  g << g_mu, g_s2, g_s2e, g_s2t, g_p;
  return g;
}

double log_marglik(const DataMatrix& data, const Allocation& alloc,
                   const HyperParams& hyper) {
  return MarginalModel(data, hyper).log_marglik(alloc);
}

double log_posterior_unnorm(const DataMatrix& data, const Allocation& alloc,
                            const HyperParams& hyper) {
  return log_prior(alloc) + log_marglik(data, alloc, hyper);
}

double eb_objective(const DataMatrix& data, const HyperParams& hyper) {
  return MarginalModel(data, hyper)
      .log_marglik(Allocation::singletons(data.num_observations()));
}

EbVector to_transformed(const HyperParams& h) {
  EbVector phi;
  phi << h.mu, std::log(h.sigma2), std::log(h.sigma2_eta),
      std::log(h.sigma2_theta), logit(h.p);
  return phi;
}

HyperParams from_transformed(const EbVector& phi) {
  HyperParams h;
  h.mu = phi(0);
  h.sigma2 = std::exp(phi(1));
  h.sigma2_eta = std::exp(phi(2));
  h.sigma2_theta = std::exp(phi(3));
  h.p = sigmoid(phi(4));
  return h;
}

EbVector eb_gradient(const DataMatrix& data, const HyperParams& hyper) {
  const EbVector g = MarginalModel(data, hyper)
                         .log_marglik_gradient(
                             Allocation::singletons(data.num_observations()));
  EbVector jac;
  jac << 1.0, hyper.sigma2, hyper.sigma2_eta, hyper.sigma2_theta,
      hyper.p * (1.0 - hyper.p);
  return g.cwiseProduct(jac);
}

namespace {

struct Box {
  EbVector lo;
  EbVector hi;

  EbVector clamp(const EbVector& x) const { return x.cwiseMax(lo).cwiseMin(hi); }
};

Box make_box(const EbOptions& opt) {
  const double inf = std::numeric_limits<double>::infinity();
  const double lv = std::log(opt.variance_guard);
  Box box;
  box.lo << -inf, lv, lv, lv, logit(opt.p_guard);
  box.hi << inf, 50.0, 50.0, 50.0, logit(1.0 - opt.p_guard);
  return box;
}

struct AscentResult {
  EbVector phi;
  double objective;
  int iterations;
  bool converged;
  std::vector<EbIteration> trace;
};

// Components pinned at a bound with the gradient pushing outward.
Eigen::Matrix<bool, 5, 1> active_set(const Box& box, const EbVector& phi,
                                     const EbVector& g) {
  Eigen::Matrix<bool, 5, 1> active;
  for (int k = 0; k < 5; ++k) {
    active(k) = (phi(k) <= box.lo(k) && g(k) < 0.0) ||
                (phi(k) >= box.hi(k) && g(k) > 0.0);
  }
  return active;
}

EbVector mask(EbVector v, const Eigen::Matrix<bool, 5, 1>& active) {
  for (int k = 0; k < 5; ++k) {
    if (active(k)) v(k) = 0.0;
  }
  return v;
}

// Projected BFGS ascent; H approximates the inverse of the negated Hessian.
AscentResult bfgs_ascent(const DataMatrix& data, EbVector phi, const Box& box,
                         const EbOptions& opt) {
  auto objective = [&](const EbVector& x) {
    return eb_objective(data, from_transformed(x));
  };
  auto gradient = [&](const EbVector& x) {
    return eb_gradient(data, from_transformed(x));
  };

  phi = box.clamp(phi);
  double f = objective(phi);
  EbVector g = gradient(phi);
  Eigen::Matrix<double, 5, 5> h_inv = Eigen::Matrix<double, 5, 5>::Identity();
  bool fresh = true;

  AscentResult out{phi, f, 0, false, {}};
  for (int it = 0; it < opt.max_iterations; ++it) {
    const auto active = active_set(box, phi, g);
    const EbVector pg = mask(g, active);
    out.trace.push_back({it, f, pg.norm()});
    if (pg.norm() < opt.gradient_tolerance) {
      out = {phi, f, it, true, std::move(out.trace)};
      return out;
    }

    EbVector dir = mask(h_inv * pg, active);
    if (dir.dot(pg) <= 0.0) {
      h_inv.setIdentity();
      fresh = true;
      dir = pg;
    }
    double step = 1.0;
    if (fresh) step = std::min(1.0, 1.0 / dir.cwiseAbs().maxCoeff());

    EbVector trial;
    double f_trial = f;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving) {
      trial = box.clamp(phi + step * dir);
      f_trial = objective(trial);
      if (std::isfinite(f_trial) && f_trial >= f + 1e-4 * pg.dot(trial - phi) &&
          f_trial >= f) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!fresh) {
        h_inv.setIdentity();
        fresh = true;
        continue;
      }
      break;
    }

    const EbVector g_trial = gradient(trial);
    const EbVector s = trial - phi;
    const EbVector y = g - g_trial;  // change in gradient of -objective
    const double sy = s.dot(y);
    if (sy > 1e-14) {
      if (fresh) h_inv *= sy / y.squaredNorm();
      const double rho = 1.0 / sy;
      const Eigen::Matrix<double, 5, 5> eye = Eigen::Matrix<double, 5, 5>::Identity();
      h_inv = (eye - rho * s * y.transpose()) * h_inv *
                  (eye - rho * y * s.transpose()) +
              rho * s * s.transpose();
      fresh = false;
    }
    phi = trial;
    f = f_trial;
    g = g_trial;
    out.iterations = it + 1;
  }
  const auto active = active_set(box, phi, g);
  const EbVector pg = mask(g, active);
  out.phi = phi;
  out.objective = f;
  out.converged = pg.norm() < opt.gradient_tolerance;
  return out;
}

}  // namespace

EbFit fit_empirical_bayes(const DataMatrix& data, const HyperParams& init,
                          const EbOptions& options) {
  init.validate();
  const Box box = make_box(options);

  double spread = std::sqrt((data.values().array() - data.values().mean())
                                .square()
                                .mean());
  if (!(spread > 0.0)) spread = 1.0;

  const EbVector phi0 = box.clamp(to_transformed(init));
  Rng rng = make_rng(options.seed, 0x65b);
  std::normal_distribution<double> normal(0.0, 1.0);

  EbFit best;
  bool have_best = false;
  int last_iterations = 0;
  double last_norm = 0.0;
  const double init_objective = eb_objective(data, from_transformed(phi0));
  for (int start = 0; start < std::max(1, options.starts); ++start) {
    EbVector phi = phi0;
    if (start > 0) {
      phi(0) += spread * normal(rng);
      for (int k = 1; k < 4; ++k) phi(k) += normal(rng);
      phi(4) += 1.5 * normal(rng);
    }
    AscentResult run = bfgs_ascent(data, phi, box, options);
    last_iterations = run.iterations;
    last_norm = run.trace.empty() ? 0.0 : run.trace.back().gradient_norm;
    if (!run.converged) continue;
    if (!have_best || run.objective > best.objective) {
      have_best = true;
      best.hyper = from_transformed(run.phi);
      best.objective = run.objective;
      best.iterations = run.iterations;
      best.best_start = start;
      best.trace = std::move(run.trace);
    }
  }
  if (!have_best) {
    fail(ErrorKind::optimization_failure,
         "no start converged within " + std::to_string(options.max_iterations) +
             " iterations (last start: " + std::to_string(last_iterations) +
             " iterations, projected gradient norm " + std::to_string(last_norm) +
             ")");
  }
  best.init_objective = init_objective;

  // A vanishing slab variance leaves p unidentified. Report the spike-only
  // representative at the lower guard when it fits equally well.
  {
    HyperParams snapped = best.hyper;
    snapped.p = options.p_guard;
    const double f = eb_objective(data, snapped);
    if (f >= best.objective - 1e-9 * std::max(1.0, std::abs(best.objective))) {
      best.hyper = snapped;
      best.objective = f;
    }
  }

  const EbVector phi = to_transformed(best.hyper);
  Eigen::Matrix<bool, 5, 1> at_bound;
  for (int k = 0; k < 5; ++k) {
    at_bound(k) = phi(k) <= box.lo(k) + 1e-9 || phi(k) >= box.hi(k) - 1e-9;
    if (at_bound(k)) best.boundary_hits.emplace_back(kHyperNames[static_cast<std::size_t>(k)]);
  }

  // Observed information on the transformed scale from central differences
  // of the analytic gradient; boundary parameters are held fixed.
  Eigen::Matrix<double, 5, 5> hess;
  const double step = 1e-5;
  for (int k = 0; k < 5; ++k) {
    EbVector up = phi, down = phi;
    up(k) += step;
    down(k) -= step;
    hess.col(k) = (eb_gradient(data, from_transformed(up)) -
                   eb_gradient(data, from_transformed(down))) /
                  (2.0 * step);
  }
  hess = 0.5 * (hess + hess.transpose()).eval();

  std::vector<int> free_idx;
  for (int k = 0; k < 5; ++k) {
    if (!at_bound(k)) free_idx.push_back(k);
  }
  EbVector se_phi = EbVector::Constant(std::numeric_limits<double>::quiet_NaN());
  if (!free_idx.empty()) {
    const auto m = static_cast<Eigen::Index>(free_idx.size());
    Eigen::MatrixXd info(m, m);
    for (Eigen::Index r = 0; r < m; ++r) {
      for (Eigen::Index c = 0; c < m; ++c) {
        info(r, c) = -hess(free_idx[static_cast<std::size_t>(r)],
                           free_idx[static_cast<std::size_t>(c)]);
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
    if (eig.info() == Eigen::Success && eig.eigenvalues().minCoeff() > 0.0) {
      const Eigen::MatrixXd cov = eig.eigenvectors() *
                                  eig.eigenvalues().cwiseInverse().asDiagonal() *
                                  eig.eigenvectors().transpose();
      for (Eigen::Index r = 0; r < m; ++r) {
        se_phi(free_idx[static_cast<std::size_t>(r)]) = std::sqrt(cov(r, r));
      }
    }
  }
  const HyperParams& h = best.hyper;
  best.standard_errors.mu = se_phi(0);
  best.standard_errors.sigma2 = h.sigma2 * se_phi(1);
  best.standard_errors.sigma2_eta = h.sigma2_eta * se_phi(2);
  best.standard_errors.sigma2_theta = h.sigma2_theta * se_phi(3);
  best.standard_errors.p = h.p * (1.0 - h.p) * se_phi(4);
  return best;
}

DataMatrix simulate_data(const HyperParams& hyper, const Allocation& alloc,
                         int num_variables, std::span<const int> replicates,
                         std::uint64_t seed) {
  hyper.validate();
  if (num_variables < 1) fail(ErrorKind::invalid_input, "need V >= 1");
  if (static_cast<int>(replicates.size()) != alloc.size()) {
    fail(ErrorKind::invalid_input, "one replicate count per observation required");
  }
  std::vector<int> unit_of;
  std::vector<Eigen::Index> first_col;
  for (int i = 0; i < alloc.size(); ++i) {
    if (replicates[static_cast<std::size_t>(i)] < 1) {
      fail(ErrorKind::invalid_input, "replicate counts must be >= 1");
    }
    first_col.push_back(static_cast<Eigen::Index>(unit_of.size()));
    for (int r = 0; r < replicates[static_cast<std::size_t>(i)]; ++r) unit_of.push_back(i);
  }

  Rng rng = make_rng(seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::bernoulli_distribution slab(hyper.p);
  const double sd = std::sqrt(hyper.sigma2);
  const double sd_eta = std::sqrt(hyper.sigma2_eta);
  const double sd_theta = std::sqrt(hyper.sigma2_theta);

  Eigen::MatrixXd values(num_variables, static_cast<Eigen::Index>(unit_of.size()));
  const auto clusters = alloc.clusters();
  for (int v = 0; v < num_variables; ++v) {
    for (const auto& members : clusters) {
      const bool gamma = slab(rng);
      const double theta = sd_theta * std_normal(rng);
      const double shift = gamma ? theta : 0.0;
      for (int i : members) {
        const double eta = sd_eta * std_normal(rng);
        for (int r = 0; r < replicates[static_cast<std::size_t>(i)]; ++r) {
          values(v, first_col[static_cast<std::size_t>(i)] + r) =
              hyper.mu + shift + eta + sd * std_normal(rng);
        }
      }
    }
  }
  return DataMatrix(std::move(values), std::move(unit_of));
}

}  // namespace rsclust
