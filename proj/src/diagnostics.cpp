#include "rsclust/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "rsclust/errors.hpp"

namespace rsclust {

namespace {

constexpr double kMaxCondition = 1e12;

double log_sum_exp(const std::vector<double>& xs) {
  const double hi = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - hi);
  return hi + std::log(s);
}

// Regularized upper incomplete gamma Q(a, x).
double gamma_q(double a, double x) {
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  const double log_prefix = -x + a * std::log(x) - std::lgamma(a);
  constexpr double eps = 1e-17;
  if (x < a + 1.0) {
    // Series for P(a, x).
    double term = 1.0 / a;
    double sum = term;
    for (int n = 1; n < 10000; ++n) {
      term *= x / (a + n);
      sum += term;
      if (std::abs(term) < std::abs(sum) * eps) break;
    }
    return 1.0 - sum * std::exp(log_prefix);
  }
  // Continued fraction for Q(a, x), modified Lentz.
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) break;
  }
  return std::exp(log_prefix) * h;
}

}  // namespace

double chi2_upper_tail(double x, int dof) {
  if (dof < 1) fail(ErrorKind::invalid_input, "chi-square needs dof >= 1");
  if (std::isnan(x) || x < 0.0) {
    fail(ErrorKind::invalid_input, "chi-square statistic must be >= 0");
  }
  return std::clamp(gamma_q(0.5 * dof, 0.5 * x), 0.0, 1.0);
}

PartitionScheme make_scheme(std::vector<std::vector<StateKey>> sets,
                            const std::function<double(const StateKey&)>& log_mass) {
  if (sets.size() < 2) fail(ErrorKind::insufficient_states, "scheme needs K >= 2 sets");
  std::unordered_map<StateKey, int> owner;
  std::vector<std::vector<double>> logs(sets.size());
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (sets[i].empty()) fail(ErrorKind::invalid_input, "scheme sets must be non-empty");
    for (const auto& key : sets[i]) {
      if (!owner.emplace(key, static_cast<int>(i)).second) {
        fail(ErrorKind::invalid_input, "scheme sets overlap at state " + key.str());
      }
      const double lm = log_mass(key);
      if (!std::isfinite(lm)) {
        fail(ErrorKind::invalid_input, "non-finite log mass for state " + key.str());
      }
      logs[i].push_back(lm);
      shift = std::max(shift, lm);
    }
  }
  PartitionScheme scheme;
  scheme.sets = std::move(sets);
  scheme.log_shift = shift;
  const auto k = static_cast<Eigen::Index>(scheme.sets.size());
  scheme.q.resize(k);
  scheme.log_q.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    scheme.log_q(i) = log_sum_exp(logs[static_cast<std::size_t>(i)]);
    scheme.q(i) = std::exp(scheme.log_q(i) - shift);
  }
  return scheme;
}

PartitionScheme top_k_scheme(const Trace& trace, int K) {
  if (K < 2) fail(ErrorKind::insufficient_states, "top-K scheme needs K >= 2");
  const auto& keys = trace.distinct_states();
  const auto& lp = trace.distinct_log_post();
  if (static_cast<int>(keys.size()) < K) {
    fail(ErrorKind::insufficient_states,
         "trace visited " + std::to_string(keys.size()) + " distinct states, K=" +
             std::to_string(K));
  }
  std::vector<std::size_t> order(keys.size());
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + K, order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (lp[a] != lp[b]) return lp[a] > lp[b];
                      return keys[a] < keys[b];
                    });
  std::vector<std::vector<StateKey>> sets;
  std::unordered_map<StateKey, double> masses;
  for (int i = 0; i < K; ++i) {
    const std::size_t s = order[static_cast<std::size_t>(i)];
    sets.push_back({keys[s]});
    masses.emplace(keys[s], lp[s]);
  }
  return make_scheme(std::move(sets),
                     [&](const StateKey& key) { return masses.at(key); });
}

namespace {

// Fills the statistic fields of `out` from the visited sub-problem.
void finish_statistic(DiagnosticResult& out, const Eigen::VectorXd& g_sub,
                      const Eigen::MatrixXd& sigma_sub, int R) {
  const auto k = g_sub.size();
  if (R < k + 1) {
    fail(ErrorKind::insufficient_regeneration,
         "R=" + std::to_string(R) + " tours is too few for K=" + std::to_string(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma_sub);
  if (eig.info() != Eigen::Success) {
    fail(ErrorKind::insufficient_regeneration, "covariance eigendecomposition failed");
  }
  const Eigen::VectorXd lam = eig.eigenvalues();
  const double lo = lam.minCoeff();
  const double hi = lam.maxCoeff();
  out.condition_number = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(lo > 0.0) || out.condition_number > kMaxCondition) {
    fail(ErrorKind::insufficient_regeneration,
         "covariance estimate is singular or ill-conditioned (condition number " +
             std::to_string(out.condition_number) + ")");
  }
  const Eigen::MatrixXd& vecs = eig.eigenvectors();
  const Eigen::MatrixXd inv = vecs * lam.cwiseInverse().asDiagonal() * vecs.transpose();
  const Eigen::MatrixXd inv_root =
      vecs * lam.cwiseSqrt().cwiseInverse().asDiagonal() * vecs.transpose();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k);
  const Eigen::VectorXd inv_ones = inv * ones;
  const Eigen::VectorXd w = inv_ones / ones.dot(inv_ones);
  const double z = w.dot(g_sub);
  const Eigen::VectorXd resid = g_sub - ones * z;
  out.t2 = R * resid.dot(inv * resid);
  const Eigen::MatrixXd proj_a = inv_root - (inv_root * ones) * w.transpose();
  out.t2_projection = R * (proj_a * g_sub).squaredNorm();
  out.dof = static_cast<int>(k) - 1;
  out.p_value = chi2_upper_tail(std::max(out.t2, 0.0), out.dof);
  out.z_inv_hat = z;
  out.log_z_inv_hat = std::log(z);
  out.weights = w;
}

}  // namespace

DiagnosticResult hotelling_from_moments(const Eigen::VectorXd& g_bar,
                                        const Eigen::MatrixXd& sigma_hat, int R) {
  if (g_bar.size() < 2 || sigma_hat.rows() != g_bar.size() ||
      sigma_hat.cols() != g_bar.size()) {
    fail(ErrorKind::invalid_input, "need K >= 2 and a K x K covariance");
  }
  DiagnosticResult out;
  out.g_bar = g_bar;
  out.sigma_hat = sigma_hat;
  out.R = R;
  out.K = static_cast<int>(g_bar.size());
  finish_statistic(out, g_bar, sigma_hat, R);
  return out;
}

DiagnosticResult hotelling_rs(const Trace& trace, const Tours& tours,
                              const PartitionScheme& scheme) {
  const int K = scheme.K();
  if (K < 2) fail(ErrorKind::insufficient_states, "scheme needs K >= 2 sets");
  if (tours.R < 2) {
    fail(ErrorKind::insufficient_regeneration, "need R >= 2 tours");
  }

  std::unordered_map<StateKey, int> owner;
  for (int i = 0; i < K; ++i) {
    for (const auto& key : scheme.sets[static_cast<std::size_t>(i)]) owner.emplace(key, i);
  }
  const auto& keys = trace.distinct_states();
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(K, static_cast<Eigen::Index>(keys.size()));
  for (std::size_t s = 0; s < keys.size(); ++s) {
    auto it = owner.find(keys[s]);
    if (it != owner.end()) {
      table(it->second, static_cast<Eigen::Index>(s)) = 1.0 / scheme.q(it->second);
    }
  }
  const RsEstimate est = rs_estimate(trace.path(), tours, table);

  DiagnosticResult out;
  out.g_bar = est.mean;
  out.sigma_hat = est.cov;
  out.R = tours.R;
  out.K = K;

  std::vector<int> visited;
  for (int i = 0; i < K; ++i) {
    if (est.mean(i) > 0.0) {
      visited.push_back(i);
    } else {
      out.unvisited.push_back(i);
    }
  }
  if (!out.unvisited.empty()) {
    out.warnings.push_back(std::to_string(out.unvisited.size()) +
                           " scheme set(s) never visited; test uses visited sets only");
  }
  if (visited.size() < 2) {
    fail(ErrorKind::insufficient_states,
         "fewer than two scheme sets visited in the tour window");
  }
  const Eigen::VectorXd g_sub = est.mean(visited);
  const Eigen::MatrixXd sigma_sub = est.cov(visited, visited);
  DiagnosticResult sub;
  finish_statistic(sub, g_sub, sigma_sub, tours.R);

  out.t2 = sub.t2;
  out.t2_projection = sub.t2_projection;
  out.dof = sub.dof;
  out.p_value = sub.p_value;
  out.condition_number = sub.condition_number;
  out.z_inv_hat = std::exp(sub.log_z_inv_hat - scheme.log_shift);
  out.log_z_inv_hat = sub.log_z_inv_hat - scheme.log_shift;
  out.weights = Eigen::VectorXd::Zero(K);
  for (std::size_t m = 0; m < visited.size(); ++m) {
    out.weights(visited[m]) = sub.weights(static_cast<Eigen::Index>(m));
  }
  return out;
}

double cv_diagnostic(const Trace& trace, const Tours& tours, int i, int j) {
  if (tours.R < 2) fail(ErrorKind::insufficient_regeneration, "CV needs R >= 2");
  const RsEstimate est = rs_estimate(trace, tours, GSpec::co_cluster(i, j), true);
  const double rho = est.mean(0);
  const double se = std::sqrt(est.cov(0, 0) / est.R);
  return se / std::max(rho, 1.0 - rho);
}

CvSummary cv_all_pairs(const Trace& trace, const Tours& tours) {
  if (tours.R < 2) fail(ErrorKind::insufficient_regeneration, "CV needs R >= 2");
  if (trace.empty()) fail(ErrorKind::invalid_input, "empty trace");
  const int n = static_cast<int>(trace.state(0).str().size());
  CvSummary out;
  out.cv = Eigen::MatrixXd::Zero(n, n);
  if (n < 2) return out;
  const RsEstimate est = rs_estimate(trace, tours, GSpec::all_co_cluster_pairs(n), true);
  Eigen::Index k = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j, ++k) {
      const double rho = est.mean(k);
      const double cv = std::sqrt(est.cov(k, 0) / est.R) / std::max(rho, 1.0 - rho);
      out.cv(i, j) = out.cv(j, i) = cv;
      if (k == 0 || cv > out.max_cv) {
        out.max_cv = cv;
        out.argmax_i = i;
        out.argmax_j = j;
      }
    }
  }
  return out;
}

}  // namespace rsclust
