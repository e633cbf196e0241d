#pragma once

#include <ostream>
#include <vector>

#include "cranopt/common.hpp"
#include "cranopt/core_model.hpp"
#include "cranopt/surrogate.hpp"

namespace cranopt {

// Multipliers of the strongly convex subproblem's dual, plus the momentum
// bookkeeping of the accelerated scheme. delta/lambda/mu always hold the
// latest projected (feasible) point; the _work copies hold the extrapolated
// evaluation point and the _prev copies the previous projected point.
struct DualState {
  RMat delta;   // T x B power multipliers (B = 1, or G with per-cluster power)
  RMat lambda;  // T x K rate-constraint multipliers
  double mu = 1.0;  // cache-budget multiplier

  RMat delta_prev, lambda_prev;
  double mu_prev = 1.0;
  RMat delta_work, lambda_work;
  double mu_work = 1.0;

  double theta_prev = 1.0;  // momentum weights, theta^(s-1) and theta^(s)
  double theta = 1.0;
  long s = 0;
};

struct DualGradient {
  RMat delta;   // per-(t, power block) transmit-power residuals
  RMat lambda;  // per-(t,k) surrogate constraint values
  double mu = 0.0;  // cache-budget residual
};

struct SubproblemSolution {
  PrimalState primal;  // exactly the closed-form recovery at the final duals
  DualState dual;
  double dual_objective = 0.0;
  long iterations = 0;
  bool converged = false;
};

enum class SolverMode { plain, accelerated };

struct SubproblemOptions {
  SolverMode mode = SolverMode::accelerated;
  long max_iterations = 100000;
  bool fix_beamformers = false;     // keep V at the expansion point
  bool force_zero_momentum = false; // reproduces plain-mode iterates exactly
  // Reset the momentum whenever the dual objective decreases. Keeps the
  // extrapolation from rippling across the multiplier-projection kinks.
  bool adaptive_restart = true;
  // Halve beta whenever the dual objective decreases (off: paper behavior).
  bool backtracking = false;
  std::ostream* trace = nullptr;           // CSV rows s,D,max_violation,theta
  std::vector<double>* objective_trace = nullptr;
};

DualState make_initial_dual(const ProblemConfig& cfg, const ModelOptions& model = {});

// Closed-form Lagrangian minimizer at the given multipliers: the auxiliary
// rates and cache sizes from their scalar quadratics (cache clipped to its
// box), the beamformers from one Hermitian PD solve per sample.
PrimalState recover_primal(const RMat& delta, const RMat& lambda, double mu,
                           const SurrogateCoeffs& coeffs,
                           const PrimalState& expansion,
                           const ProblemConfig& cfg,
                           bool fix_beamformers = false);

// Partial derivatives of the dual objective: plain constraint residuals
// evaluated at the recovered primal point.
DualGradient dual_gradient(const PrimalState& primal_star,
                           const SurrogateCoeffs& coeffs,
                           const ProblemConfig& cfg);

// Dual objective value at (delta, lambda, mu); grad_at_star must hold the
// residuals of the same recovered point.
double dual_objective_value(const PrimalState& primal_star, const RMat& delta,
                            const RMat& lambda, double mu,
                            const DualGradient& grad_at_star,
                            const PrimalState& expansion,
                            const ProblemConfig& cfg);

// One projected gradient ascent step on every multiplier.
void projected_step(DualState& dual, const DualGradient& g, double beta);

// One accelerated step: projected step from the extrapolated point, then
// extrapolation with the momentum weight sequence.
void momentum_step(DualState& dual, const DualGradient& g, double beta,
                   bool force_zero_momentum = false);

// Iterates recovery + dual steps until the relative change of the dual
// objective drops below cfg.tol_inner, starting from all-ones multipliers.
// Hitting the iteration cap returns converged = false with the last state.
SubproblemSolution solve_subproblem(const PrimalState& expansion,
                                    const SurrogateCoeffs& coeffs,
                                    const ProblemConfig& cfg,
                                    const SubproblemOptions& opts = {});

// ---- content-delivery (fixed-cache, single-sample) subproblem ----

struct McmbSubproblemSolution {
  std::vector<CMat> V;       // [G]
  std::vector<double> eta;   // [G]
  RVec lambda;               // [K]
  double delta = 0.0;
  double dual_objective = 0.0;
  long iterations = 0;
  bool converged = false;
};

// Solves the convex beamforming subproblem at fixed cache sizes with the
// same prox-regularized dual ascent, specialized to one sample: quadratic
// upper bounds h_k plus linear (F - C_k) eta terms.
McmbSubproblemSolution solve_mcmb_subproblem(
    const std::vector<CMat>& V_i, const std::vector<double>& eta_i,
    const std::vector<double>& C_fixed, const SurrogateCoeffs& coeffs,
    const ProblemConfig& cfg, const SubproblemOptions& opts = {});

}  // namespace cranopt
