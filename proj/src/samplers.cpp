#include "rsclust/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rsclust/errors.hpp"

namespace rsclust {

const char* to_string(Kernel kernel) noexcept {
  switch (kernel) {
    case Kernel::gibbs: return "gibbs";
    case Kernel::split_merge_hybrid: return "split_merge_hybrid";
  }
  return "unknown";
}

Kernel parse_kernel(const std::string& name) {
  if (name == "gibbs") return Kernel::gibbs;
  if (name == "split_merge_hybrid" || name == "split-merge" || name == "hybrid") {
    return Kernel::split_merge_hybrid;
  }
  fail(ErrorKind::invalid_input, "unknown kernel '" + name + "'");
}

void ChainConfig::validate(int num_observations) const {
  if (n_iterations < 1) fail(ErrorKind::invalid_input, "n_iterations must be >= 1");
  if (gibbs_cycles_per_splitmerge < 1 || restricted_scan_count < 1) {
    fail(ErrorKind::invalid_input, "sweep and scan counts must be >= 1");
  }
  if (initial_allocation.size() != num_observations) {
    fail(ErrorKind::invalid_input, "initial allocation does not match data size");
  }
}

namespace {

// Draws an index with probability proportional to exp(log_w[k]).
// Returns the index and its log probability.
std::pair<int, double> sample_log_weights(const std::vector<double>& log_w,
                                          Rng& rng) {
  const double hi = *std::max_element(log_w.begin(), log_w.end());
  double total = 0.0;
  for (double w : log_w) total += std::exp(w - hi);
  double u = uniform01(rng) * total;
  int pick = static_cast<int>(log_w.size()) - 1;
  for (std::size_t k = 0; k < log_w.size(); ++k) {
    const double w = std::exp(log_w[k] - hi);
    if (u < w) {
      pick = static_cast<int>(k);
      break;
    }
    u -= w;
  }
  return {pick, log_w[static_cast<std::size_t>(pick)] - hi - std::log(total)};
}

double log_sum_exp2(double a, double b) {
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

}  // namespace

SamplerState::SamplerState(const MarginalModel& model, const Allocation& start)
    : model_(&model) {
  if (start.size() != model.num_observations()) {
    fail(ErrorKind::invalid_input, "start allocation does not match data size");
  }
  slot_of_.resize(static_cast<std::size_t>(start.size()));
  for (int i = 0; i < start.size(); ++i) slot_of_[static_cast<std::size_t>(i)] = start[i] - 1;
  blocks_.resize(static_cast<std::size_t>(start.num_clusters()));
  order_.resize(static_cast<std::size_t>(start.size()));
  rebuild();
}

void SamplerState::rebuild() {
  const int nv = model_->num_variables();
  int max_slot = 0;
  for (int s : slot_of_) max_slot = std::max(max_slot, s);
  blocks_.resize(std::max(blocks_.size(), static_cast<std::size_t>(max_slot) + 1));
  for (auto& block : blocks_) {
    block.size = 0;
    block.a = 0.0;
    block.b = Eigen::VectorXd::Zero(nv);
  }
  for (std::size_t i = 0; i < slot_of_.size(); ++i) {
    Block& block = blocks_[static_cast<std::size_t>(slot_of_[i])];
    ++block.size;
    block.a += model_->obs_weight(static_cast<int>(i));
    block.b += model_->obs_score(static_cast<int>(i));
  }
  free_slots_.clear();
  num_clusters_ = 0;
  for (std::size_t s = blocks_.size(); s-- > 0;) {
    if (blocks_[s].size == 0) {
      free_slots_.push_back(static_cast<int>(s));
      blocks_[s].loglik = 0.0;
    } else {
      ++num_clusters_;
      refresh(blocks_[s]);
    }
  }
}

int SamplerState::new_slot() {
  if (!free_slots_.empty()) {
    const int s = free_slots_.back();
    free_slots_.pop_back();
    return s;
  }
  blocks_.push_back(Block{0, 0.0, Eigen::VectorXd::Zero(model_->num_variables()), 0.0});
  return static_cast<int>(blocks_.size()) - 1;
}

void SamplerState::refresh(Block& block) const {
  block.loglik = block.size > 0 ? model_->cluster_loglik(block.a, block.b) : 0.0;
}

void SamplerState::add(Block& block, int obs) const {
  ++block.size;
  block.a += model_->obs_weight(obs);
  block.b += model_->obs_score(obs);
  refresh(block);
}

void SamplerState::remove(Block& block, int obs) const {
  --block.size;
  block.a -= model_->obs_weight(obs);
  block.b -= model_->obs_score(obs);
  refresh(block);
}

Allocation SamplerState::allocation() const {
  std::vector<int> raw(slot_of_.size());
  for (std::size_t i = 0; i < slot_of_.size(); ++i) raw[i] = slot_of_[i] + 1;
  return canonicalize(raw);
}

void SamplerState::gibbs_sweep(Rng& rng) {
  rebuild();
  const int n = static_cast<int>(slot_of_.size());
  std::iota(order_.begin(), order_.end(), 0);
  std::shuffle(order_.begin(), order_.end(), rng);

  std::vector<double> log_w;
  std::vector<int> slots;
  Eigen::VectorXd joined(model_->num_variables());
  for (int obs : order_) {
    const int home = slot_of_[static_cast<std::size_t>(obs)];
    Block& home_block = blocks_[static_cast<std::size_t>(home)];
    remove(home_block, obs);
    if (home_block.size == 0) {
      free_slots_.push_back(home);
      --num_clusters_;
    }

    log_w.clear();
    slots.clear();
    const double a_obs = model_->obs_weight(obs);
    for (std::size_t s = 0; s < blocks_.size(); ++s) {
      const Block& block = blocks_[s];
      if (block.size == 0) continue;
      joined = block.b + model_->obs_score(obs);
      log_w.push_back(std::log(block.size + 1.0) +
                      model_->cluster_loglik(block.a + a_obs, joined) -
                      block.loglik);
      slots.push_back(static_cast<int>(s));
    }
    // Opening a new cluster raises C by one: (C)!/(C-1)! and (N+C-1)!/(N+C)!.
    const double c = num_clusters_;
    const double singleton =
        model_->cluster_loglik(a_obs, model_->obs_score(obs));
    log_w.push_back(num_clusters_ > 0 ? std::log(c) - std::log(n + c) + singleton
                                      : 0.0);
    slots.push_back(-1);

    const int pick = sample_log_weights(log_w, rng).first;
    int target = slots[static_cast<std::size_t>(pick)];
    if (target < 0) {
      target = new_slot();
      ++num_clusters_;
    }
    slot_of_[static_cast<std::size_t>(obs)] = target;
    add(blocks_[static_cast<std::size_t>(target)], obs);
  }
}

double SamplerState::log_prior_terms(int num_clusters) const {
  const double n = static_cast<double>(slot_of_.size());
  return std::lgamma(static_cast<double>(num_clusters)) -
         std::lgamma(n + num_clusters);
}

SplitMergeResult SamplerState::split_merge(Rng& rng, int restricted_scans) {
  const int n = static_cast<int>(slot_of_.size());
  if (n < 2) fail(ErrorKind::invalid_input, "split-merge needs N >= 2");
  std::uniform_int_distribution<int> pick_i(0, n - 1);
  std::uniform_int_distribution<int> pick_j(0, n - 2);
  const int i = pick_i(rng);
  int j = pick_j(rng);
  if (j >= i) ++j;
  return split_merge(rng, restricted_scans, i, j);
}

SplitMergeResult SamplerState::split_merge(Rng& rng, int restricted_scans,
                                           int i, int j) {
  const int n = static_cast<int>(slot_of_.size());
  if (i == j || i < 0 || j < 0 || i >= n || j >= n) {
    fail(ErrorKind::invalid_input, "split-merge needs two distinct observations");
  }
  rebuild();
  const int slot_i = slot_of_[static_cast<std::size_t>(i)];
  const int slot_j = slot_of_[static_cast<std::size_t>(j)];
  const bool propose_split = slot_i == slot_j;

  std::vector<int> others;
  for (int k = 0; k < n; ++k) {
    const int s = slot_of_[static_cast<std::size_t>(k)];
    if (k != i && k != j && (s == slot_i || s == slot_j)) others.push_back(k);
  }

  const int nv = model_->num_variables();
  Block side_i{0, 0.0, Eigen::VectorXd::Zero(nv), 0.0};
  Block side_j{0, 0.0, Eigen::VectorXd::Zero(nv), 0.0};
  add(side_i, i);
  add(side_j, j);
  std::vector<char> on_j(others.size(), 0);
  std::bernoulli_distribution coin(0.5);
  for (std::size_t m = 0; m < others.size(); ++m) {
    on_j[m] = coin(rng) ? 1 : 0;
    add(on_j[m] ? side_j : side_i, others[m]);
  }

  Eigen::VectorXd joined(nv);
  // One restricted Gibbs scan over `others`. With `forced` set, each
  // observation is moved to its forced side instead of sampled. Returns
  // the log probability of the resulting assignments.
  auto scan = [&](const std::vector<char>* forced) {
    double log_q = 0.0;
    for (std::size_t m = 0; m < others.size(); ++m) {
      const int k = others[m];
      remove(on_j[m] ? side_j : side_i, k);
      const double a_k = model_->obs_weight(k);
      joined = side_i.b + model_->obs_score(k);
      const double w_i = std::log(side_i.size + 1.0) +
                         model_->cluster_loglik(side_i.a + a_k, joined) -
                         side_i.loglik;
      joined = side_j.b + model_->obs_score(k);
      const double w_j = std::log(side_j.size + 1.0) +
                         model_->cluster_loglik(side_j.a + a_k, joined) -
                         side_j.loglik;
      const double log_norm = log_sum_exp2(w_i, w_j);
      char to_j;
      if (forced != nullptr) {
        to_j = (*forced)[m];
      } else {
        to_j = uniform01(rng) < std::exp(w_j - log_norm) ? 1 : 0;
      }
      log_q += (to_j ? w_j : w_i) - log_norm;
      on_j[m] = to_j;
      add(to_j ? side_j : side_i, k);
    }
    return log_q;
  };

  for (int s = 0; s < restricted_scans; ++s) scan(nullptr);

  SplitMergeResult result;
  result.proposed_split = propose_split;
  if (propose_split) {
    const double log_q = scan(nullptr);
    const Block& merged = blocks_[static_cast<std::size_t>(slot_i)];
    const double delta =
        log_prior_terms(num_clusters_ + 1) - log_prior_terms(num_clusters_) +
        std::lgamma(side_i.size + 1.0) + std::lgamma(side_j.size + 1.0) -
        std::lgamma(merged.size + 1.0) + side_i.loglik + side_j.loglik -
        merged.loglik;
    result.log_accept_ratio = delta - log_q;
    result.accepted = std::log(uniform01(rng)) < result.log_accept_ratio;
    if (result.accepted) {
      const int fresh = new_slot();
      blocks_[static_cast<std::size_t>(slot_i)] = side_i;
      blocks_[static_cast<std::size_t>(fresh)] = side_j;
      slot_of_[static_cast<std::size_t>(j)] = fresh;
      for (std::size_t m = 0; m < others.size(); ++m) {
        if (on_j[m]) slot_of_[static_cast<std::size_t>(others[m])] = fresh;
      }
      ++num_clusters_;
    }
  } else {
    std::vector<char> actual(others.size());
    for (std::size_t m = 0; m < others.size(); ++m) {
      actual[m] = slot_of_[static_cast<std::size_t>(others[m])] == slot_j ? 1 : 0;
    }
    const double log_q = scan(&actual);
    const Block& ci = blocks_[static_cast<std::size_t>(slot_i)];
    const Block& cj = blocks_[static_cast<std::size_t>(slot_j)];
    Block merged{ci.size + cj.size, ci.a + cj.a, ci.b + cj.b, 0.0};
    refresh(merged);
    const double split_minus_merged =
        log_prior_terms(num_clusters_) - log_prior_terms(num_clusters_ - 1) +
        std::lgamma(ci.size + 1.0) + std::lgamma(cj.size + 1.0) -
        std::lgamma(merged.size + 1.0) + ci.loglik + cj.loglik - merged.loglik;
    result.log_accept_ratio = -split_minus_merged + log_q;
    result.accepted = std::log(uniform01(rng)) < result.log_accept_ratio;
    if (result.accepted) {
      blocks_[static_cast<std::size_t>(slot_i)] = merged;
      blocks_[static_cast<std::size_t>(slot_j)].size = 0;
      for (auto& s : slot_of_) {
        if (s == slot_j) s = slot_i;
      }
      free_slots_.push_back(slot_j);
      --num_clusters_;
    }
  }
  return result;
}

Allocation gibbs_sweep(const DataMatrix& data, const HyperParams& hyper,
                       const Allocation& alloc, Rng& rng) {
  MarginalModel model(data, hyper);
  SamplerState state(model, alloc);
  state.gibbs_sweep(rng);
  return state.allocation();
}

SplitMergeResult split_merge_update(const DataMatrix& data,
                                    const HyperParams& hyper,
                                    Allocation& alloc, Rng& rng,
                                    int restricted_scans) {
  MarginalModel model(data, hyper);
  SamplerState state(model, alloc);
  const SplitMergeResult result = state.split_merge(rng, restricted_scans);
  alloc = state.allocation();
  return result;
}

Trace run_chain(const DataMatrix& data, const HyperParams& hyper,
                const ChainConfig& config) {
  config.validate(data.num_observations());
  const MarginalModel model(data, hyper);
  SamplerState state(model, config.initial_allocation);
  Rng rng = make_rng(config.seed);

  Trace trace;
  auto record = [&] {
    const Allocation a = state.allocation();
    trace.push_lazy(a.key(), [&] { return model.log_posterior(a); });
  };

  long proposals = 0, accepted = 0, splits_proposed = 0;
  if (config.kernel == Kernel::gibbs) {
    for (int it = 0; it < config.n_iterations; ++it) {
      state.gibbs_sweep(rng);
      record();
    }
  } else {
    const bool can_split_merge = data.num_observations() >= 2;
    for (int it = 0; it < config.n_iterations; ++it) {
      if (can_split_merge) {
        const auto r = state.split_merge(rng, config.restricted_scan_count);
        ++proposals;
        accepted += r.accepted ? 1 : 0;
        splits_proposed += r.proposed_split ? 1 : 0;
      }
      record();
      for (int g = 0; g < config.gibbs_cycles_per_splitmerge; ++g) {
        state.gibbs_sweep(rng);
        record();
      }
    }
  }

  trace.meta["kernel"] = to_string(config.kernel);
  trace.meta["n_iterations"] = std::to_string(config.n_iterations);
  trace.meta["seed"] = std::to_string(config.seed);
  trace.meta["initial_state"] = config.initial_allocation.key().str();
  if (config.kernel == Kernel::gibbs) {
    trace.meta["recording"] = "one state per full gibbs sweep";
  } else {
    trace.meta["gibbs_cycles_per_splitmerge"] =
        std::to_string(config.gibbs_cycles_per_splitmerge);
    trace.meta["restricted_scan_count"] = std::to_string(config.restricted_scan_count);
    trace.meta["recording"] =
        "one state per component update (split-merge, then each gibbs sweep)";
    trace.meta["splitmerge_proposals"] = std::to_string(proposals);
    trace.meta["splitmerge_accepted"] = std::to_string(accepted);
    trace.meta["splitmerge_split_proposals"] = std::to_string(splits_proposed);
  }
  return trace;
}

Allocation initial_allocation(const std::string& rule, int n, std::uint64_t seed) {
  if (n < 1) fail(ErrorKind::invalid_input, "need at least one observation");
  if (rule == "singletons") return Allocation::singletons(n);
  if (rule == "one-cluster") return Allocation::one_cluster(n);
  if (rule == "random") {
    Rng rng = make_rng(seed, 0x1417);
    std::uniform_int_distribution<int> label(1, n);
    std::vector<int> raw(static_cast<std::size_t>(n));
    for (int& l : raw) l = label(rng);
    return canonicalize(raw);
  }
  fail(ErrorKind::invalid_input, "unknown initial allocation rule '" + rule + "'");
}

}  // namespace rsclust
