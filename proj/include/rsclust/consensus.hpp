#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "rsclust/partition.hpp"
#include "rsclust/regen.hpp"
#include "rsclust/trace.hpp"

namespace rsclust {

/// Pairwise co-occurrence probabilities: symmetric, unit diagonal,
/// entries in [0, 1].
struct ConsensusMatrix {
  Eigen::MatrixXd rho;
  Eigen::MatrixXd se;  // regenerative standard errors; empty for exact matrices
};

/// RS estimate of every rho_ij over the tour window, with standard errors
/// from the univariate regenerative variance.
ConsensusMatrix co_occurrence_rs(const Trace& trace, const Tours& tours);

struct MapState {
  Allocation allocation;
  StateKey key;
  double log_post = 0.0;
};

/// Visited state with the highest cached log posterior; ties go to the
/// lexicographically smallest key.
MapState map_allocation(const Trace& trace);

/// Cumulative normalized mass after sorting states by decreasing mass.
/// Input pairs are (state, log unnormalized mass). Returns (rank, cum).
std::vector<std::pair<int, double>> cumulative_mass_curve(
    const std::vector<std::pair<StateKey, double>>& table);

}  // namespace rsclust
