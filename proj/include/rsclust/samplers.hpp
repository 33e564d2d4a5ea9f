#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "rsclust/model.hpp"
#include "rsclust/partition.hpp"
#include "rsclust/rng.hpp"
#include "rsclust/trace.hpp"

namespace rsclust {

enum class Kernel { gibbs, split_merge_hybrid };

const char* to_string(Kernel kernel) noexcept;
Kernel parse_kernel(const std::string& name);

struct ChainConfig {
  Kernel kernel = Kernel::gibbs;
  int n_iterations = 1;
  std::uint64_t seed = 1;
  int gibbs_cycles_per_splitmerge = 5;
  int restricted_scan_count = 5;
  Allocation initial_allocation;

  void validate(int num_observations) const;
};

struct SplitMergeResult {
  bool accepted = false;
  bool proposed_split = false;
  /// log of the Metropolis-Hastings ratio, before truncation at 0.
  double log_accept_ratio = 0.0;
};

/// Mutable chain state: working labels plus additive per-cluster block
/// statistics. Cluster log-likelihoods are cached and refreshed whenever
/// membership changes.
class SamplerState {
 public:
  SamplerState(const MarginalModel& model, const Allocation& start);

  Allocation allocation() const;
  const MarginalModel& model() const noexcept { return *model_; }

  /// One random-scan Gibbs sweep over all observations.
  void gibbs_sweep(Rng& rng);

  /// One Jain-Neal split-merge proposal with restricted Gibbs launch.
  SplitMergeResult split_merge(Rng& rng, int restricted_scans);

  /// Same move for a chosen pair of distinct observations.
  SplitMergeResult split_merge(Rng& rng, int restricted_scans, int i, int j);

 private:
  struct Block {
    int size = 0;
    double a = 0.0;
    Eigen::VectorXd b;
    double loglik = 0.0;
  };

  void rebuild();
  int new_slot();
  void add(Block& block, int obs) const;
  void remove(Block& block, int obs) const;
  void refresh(Block& block) const;
  double log_prior_terms(int num_clusters) const;

  const MarginalModel* model_;
  std::vector<int> slot_of_;  // observation -> block slot
  std::vector<Block> blocks_;
  std::vector<int> free_slots_;
  int num_clusters_ = 0;
  std::vector<int> order_;
};

Allocation gibbs_sweep(const DataMatrix& data, const HyperParams& hyper,
                       const Allocation& alloc, Rng& rng);

SplitMergeResult split_merge_update(const DataMatrix& data,
                                    const HyperParams& hyper,
                                    Allocation& alloc, Rng& rng,
                                    int restricted_scans = 5);

/// Runs one chain. Gibbs records one state per sweep. The hybrid kernel
/// records one state per component update, so each iteration contributes
/// 1 + gibbs_cycles_per_splitmerge states.
Trace run_chain(const DataMatrix& data, const HyperParams& hyper,
                const ChainConfig& config);

/// Starting allocation by name: "singletons", "one-cluster" or "random".
Allocation initial_allocation(const std::string& rule, int n, std::uint64_t seed);

}  // namespace rsclust
