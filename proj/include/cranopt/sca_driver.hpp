#pragma once

#include <optional>
#include <vector>

#include "cranopt/channels.hpp"
#include "cranopt/common.hpp"
#include "cranopt/core_model.hpp"
#include "cranopt/dual_solver.hpp"

namespace cranopt {

struct TraceRow {
  int iteration = 0;
  double objective = 0.0;     // smooth-problem cost at the iterate
  long inner_iterations = 0;
  double wall_ms = 0.0;
  double max_residual = 0.0;  // worst constraint violation of the iterate
};

struct SolveTrace {
  std::vector<TraceRow> rows;
  void write_csv(std::ostream& out) const;
};

struct SolveOptions {
  SolverMode mode = SolverMode::accelerated;
  bool fix_beamformers = false;
  int max_outer = 2000;
  long max_inner = 100000;
  bool adaptive_restart = true;
  bool force_zero_momentum = false;
  ModelOptions model;
  std::optional<PrimalState> initial_point;  // overrides the equal-split init
};

// Equal power split across clusters and streams, equal cache split across
// BSs (clamped away from the file size if the budget is generous), auxiliary
// rates from the resulting mutual informations.
PrimalState initialize_cache_problem(const ProblemConfig& cfg,
                                     const std::vector<std::vector<CMat>>& H,
                                     const ModelOptions& model = {});

struct CacheSolution {
  PrimalState primal;
  SolveTrace trace;
  bool converged = false;
  int outer_iterations = 0;
};

// Outer SCA loop for the cache-allocation problem: recompute surrogate
// coefficients at the iterate, solve the strongly convex subproblem in the
// dual, repeat until the windowed relative decrease of the cost falls below
// tol_outer.
CacheSolution solve_cache_allocation(const ProblemConfig& cfg,
                                     const ChannelSet& channels,
                                     const SolveOptions& opts = {});

struct McmbResult {
  std::vector<CMat> V;   // [G], M x d
  RateReport rates;      // achieved rates under the true interference model
  SolveTrace trace;
  bool converged = false;
};

// Content-delivery beamforming for one channel realization at fixed cache
// sizes. opts.model selects the optimization model (the ignore-interference
// baseline optimizes without interference); achieved rates are always
// evaluated with the true model.
McmbResult solve_mcmb(const ProblemConfig& cfg, const std::vector<CMat>& H_single,
                      const std::vector<double>& C_fixed,
                      const SolveOptions& opts = {});

// Per-cluster file lists with request probabilities; request tuples take one
// file per cluster, indexed cluster-major.
struct FileCatalog {
  std::vector<std::vector<double>> sizes;  // [G][files in g]
  std::vector<std::vector<double>> pops;   // [G][files in g], sums to 1
  int files_in(int g) const { return static_cast<int>(sizes[g].size()); }
  int tuple_count() const;
  std::vector<int> tuple_files(int f) const;  // per-cluster file index
  double tuple_probability(int f) const;
  void validate(const ProblemConfig& cfg) const;
};

// Independent channel draws for every request tuple.
std::vector<ChannelSet> sample_tuple_channels(const ProblemConfig& cfg,
                                              const FileCatalog& catalog,
                                              const std::vector<double>& distances_m,
                                              double antenna_gain_db,
                                              std::uint64_t seed);

struct MultiFileSolution {
  std::vector<std::vector<double>> C;  // [K][files in cluster_of[k]]
  SolveTrace trace;
  bool converged = false;
  int outer_iterations = 0;
};

// Popularity-weighted cache allocation across multiple files per cluster.
// With a single unit-probability file per cluster this reduces to
// solve_cache_allocation on the same channels.
MultiFileSolution solve_multifile(const ProblemConfig& cfg,
                                  const FileCatalog& catalog,
                                  const std::vector<ChannelSet>& tuple_channels,
                                  const SolveOptions& opts = {});

// Nearest-integer rounding, then greedy decrements (largest rounding-up
// residual first, lowest index on ties) until the budget holds again.
std::vector<double> round_cache(const std::vector<double>& C, double C_tot);

}  // namespace cranopt
