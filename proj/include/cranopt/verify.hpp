#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cranopt/common.hpp"
#include "cranopt/core_model.hpp"

namespace cranopt {

struct OracleResult {
  std::string name;
  double max_abs_dev = 0.0;
  double max_rel_dev = 0.0;
  bool pass = false;
  int samples = 0;
  std::uint64_t seed = 0;
  std::string detail;
};

// Central finite differences per real coordinate.
RVec fd_gradient(const std::function<double(const RVec&)>& f, const RVec& x,
                 double step);

// Surrogate tightness/gradient oracle: random expansion points and probes on
// the given instance; dominance margin >= -1e-9, expansion-point equality
// within 1e-8, finite-difference gradient match within 1e-4 relative.
OracleResult check_prop1(const ProblemConfig& cfg,
                         const std::vector<std::vector<CMat>>& H,
                         int n_samples, std::uint64_t seed);

// Closed-form primal recovery oracle: minimizes the partial Lagrangian by
// projected gradient descent (independent of the closed forms) at random
// non-negative multipliers and compares per coordinate within 1e-6.
OracleResult check_prop2(const ProblemConfig& cfg,
                         const std::vector<std::vector<CMat>>& H,
                         int n_duals, std::uint64_t seed);

// Exhaustive simplex grid search of the sample-approximation objective with
// the beamformers held fixed. Refuses K > 3.
std::vector<double> brute_force_cache(const ProblemConfig& cfg,
                                      const std::vector<std::vector<CMat>>& H,
                                      const PrimalState& fixed_V_point,
                                      double grid_step);

// Objective of the sample-approximation problem at fixed beamformers
// (used by the grid search and its consumers).
double cache_objective_fixed_V(const ProblemConfig& cfg,
                               const std::vector<std::vector<double>>& mi,
                               const std::vector<double>& C);

// Mutual informations of a fixed-beamformer point, the only model quantity
// the grid oracle needs.
std::vector<std::vector<double>> mutual_info_grid(
    const ProblemConfig& cfg, const std::vector<std::vector<CMat>>& H,
    const PrimalState& fixed_V_point);

}  // namespace cranopt
