#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cranopt/common.hpp"

namespace cranopt {

// All scalars defining one problem instance: topology, budgets, noise and
// the solver knobs (prox weights, dual step size, stopping rules).
struct ProblemConfig {
  int G = 1;                    // clusters
  int K = 1;                    // total BSs
  std::vector<int> cluster_of;  // per-BS cluster index in [0, G)
  int M = 2;                    // computation-center antennas
  int N = 1;                    // BS antennas (streams per cluster d = N)
  double P_tot = 1.0;           // total transmit power, watts
  double C_tot = 0.0;           // total cache budget, content units
  std::vector<double> F_g;      // per-cluster file size, content units
  std::vector<double> sigma2;   // per-BS noise power, watts
  int T = 1;                    // channel sample count
  double rho1 = 1e5;            // prox weight on the auxiliary rates
  double rho2 = 1e4;            // prox weight on the beamformers
  double rho3 = 1.0;            // prox weight on the cache sizes
  double beta = 1.0;            // dual step size
  double tol_inner = 1e-3;      // dual solver stop: relative objective change
  double tol_outer = 1e-2;      // outer stop: relative decrease over the window
  int outer_window = 100;       // iteration window for the outer stopping rule
  std::uint64_t seed = 0;

  int d() const { return N; }
  std::vector<std::vector<int>> clusters() const;  // BS index sets per cluster
  void validate() const;  // throws domain_error on any violated invariant
};

// Iterate of the cache-allocation problem: cache sizes, per-sample
// beamformers, per-sample auxiliary rates.
struct PrimalState {
  std::vector<double> C;                 // [K]
  std::vector<std::vector<CMat>> V;      // [G][T], each M x d
  std::vector<std::vector<double>> eta;  // [G][T], nats per content unit
};

struct RateReport {
  std::vector<std::vector<double>> mutual_info;   // [K][T], nats
  std::vector<std::vector<double>> cluster_rate;  // [G][T], nats (+inf when a
                                                  // whole cluster is cached)
  std::vector<double> sum_rate;                   // [T], nats
  std::vector<double> sum_rate_bits;              // [T], bits
  std::vector<bool> fully_cached;                 // [K]
};

struct Violation {
  std::string constraint;
  double magnitude = 0.0;
};

struct FeasibilityReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  double max_violation() const;
};

// Model variant used by the baseline schemes: drop inter-cluster interference
// from the optimization model, and/or constrain power per cluster instead of
// jointly across clusters.
struct ModelOptions {
  bool interference = true;
  bool per_cluster_power = false;
};

// A BS holding the entire file needs no backhaul; it is excluded from the
// cluster min instead of producing a singular rate factor.
inline bool is_fully_cached(double C_k, double F_gk) {
  return C_k >= F_gk * (1.0 - 1e-12);
}

// J_k of the rate model: inverse of interference-plus-noise covariance at
// BS k given all cluster beamformers. Hermitian positive definite.
CMat interference_inverse(const CMat& H_k, const std::vector<CMat>& V_all,
                          int g_k, double sigma2_k);

// log det(I_N + H V V^H H^H J), natural log. Requires J Hermitian PD and
// finite inputs; the value is >= 0.
double mutual_information(const CMat& H_k, const CMat& V_gk, const CMat& J_k);

// Downloading rates of every cluster and sample: the cluster rate is the
// minimum over member BSs of F_g/(F_g - C_k) times the mutual information.
RateReport sum_rate(const ProblemConfig& cfg,
                    const std::vector<std::vector<CMat>>& H,
                    const PrimalState& primal,
                    const ModelOptions& model = {});

// Lists every violated constraint of the sample-approximation problem
// (power per sample, cache budget, cache boxes) with its magnitude.
FeasibilityReport check_feasibility(const ProblemConfig& cfg,
                                    const PrimalState& primal, double tol);

// JSON (de)serialization; keys mirror the field names.
ProblemConfig problem_config_from_json(const std::string& text);
std::string problem_config_to_json(const ProblemConfig& cfg);
ProblemConfig load_problem_config(const std::string& path);

// Stable hash of the canonical JSON form, recorded in reports and files.
std::string config_fingerprint(const ProblemConfig& cfg);

}  // namespace cranopt
