#include "cranopt/dual_solver.hpp"

#include <cmath>
#include <limits>

namespace cranopt {

namespace {

double max_positive(const RMat& m) {
  double v = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i)
    v = std::max(v, m.data()[i]);
  return v;
}

double max_constraint_violation(const DualGradient& g) {
  return std::max({max_positive(g.delta), max_positive(g.lambda),
                   std::max(g.mu, 0.0)});
}

double next_theta(double theta_prev) {
  return 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta_prev * theta_prev));
}

}  // namespace

DualState make_initial_dual(const ProblemConfig& cfg,
                            const ModelOptions& model) {
  DualState d;
  int B = model.per_cluster_power ? cfg.G : 1;
  d.delta = RMat::Ones(cfg.T, B);
  d.lambda = RMat::Ones(cfg.T, cfg.K);
  d.mu = 1.0;
  d.delta_prev = d.delta;
  d.lambda_prev = d.lambda;
  d.mu_prev = d.mu;
  d.delta_work = d.delta;
  d.lambda_work = d.lambda;
  d.mu_work = d.mu;
  d.theta_prev = 1.0;
  d.theta = 1.0;
  d.s = 0;
  return d;
}

PrimalState recover_primal(const RMat& delta, const RMat& lambda, double mu,
                           const SurrogateCoeffs& coeffs,
                           const PrimalState& expansion,
                           const ProblemConfig& cfg, bool fix_beamformers) {
  const int G = cfg.G, K = cfg.K, T = cfg.T, M = cfg.M;
  const auto clusters = cfg.clusters();
  const bool interference = coeffs.model.interference;
  const bool pcp = coeffs.model.per_cluster_power;

  PrimalState out;
  out.C.assign(K, 0.0);
  out.V.assign(G, std::vector<CMat>(T));
  out.eta.assign(G, std::vector<double>(T, 0.0));

  for (int t = 0; t < T; ++t) {
    for (int g = 0; g < G; ++g) {
      double lam_sum = 0.0, lam_C = 0.0;
      for (int k : clusters[g]) {
        lam_sum += lambda(t, k);
        lam_C += lambda(t, k) * expansion.C[k];
      }
      double F = cfg.F_g[g];
      out.eta[g][t] = expansion.eta[g][t] +
                      ((1.0 - lam_sum) * F + lam_C) / (cfg.rho1 + lam_sum);
    }
    if (fix_beamformers) {
      for (int g = 0; g < G; ++g) out.V[g][t] = expansion.V[g][t];
    } else if (interference && !pcp) {
      // one factorization per sample, shared by all clusters
      CMat S = (cfg.rho2 + delta(t, 0)) * CMat::Identity(M, M);
      for (int k = 0; k < K; ++k)
        S.noalias() += lambda(t, k) * coeffs.at(k, t).A;
      Eigen::LDLT<CMat> ldlt(S);
      for (int g = 0; g < G; ++g) {
        CMat rhs = cfg.rho2 * expansion.V[g][t];
        for (int k : clusters[g])
          rhs.noalias() -= lambda(t, k) * coeffs.at(k, t).B.adjoint();
        out.V[g][t] = ldlt.solve(rhs);
      }
    } else {
      for (int g = 0; g < G; ++g) {
        double dt = pcp ? delta(t, g) : delta(t, 0);
        CMat S = (cfg.rho2 + dt) * CMat::Identity(M, M);
        if (interference) {
          for (int k = 0; k < K; ++k)
            S.noalias() += lambda(t, k) * coeffs.at(k, t).A;
        } else {
          for (int k : clusters[g])
            S.noalias() += lambda(t, k) * coeffs.at(k, t).A;
        }
        CMat rhs = cfg.rho2 * expansion.V[g][t];
        for (int k : clusters[g])
          rhs.noalias() -= lambda(t, k) * coeffs.at(k, t).B.adjoint();
        out.V[g][t] = Eigen::LDLT<CMat>(S).solve(rhs);
      }
    }
  }

  for (int k = 0; k < K; ++k) {
    int gk = cfg.cluster_of[k];
    double lam_sum = 0.0, lam_eta = 0.0;
    for (int t = 0; t < T; ++t) {
      lam_sum += lambda(t, k);
      lam_eta += lambda(t, k) * expansion.eta[gk][t];
    }
    double raw = expansion.C[k] + (lam_eta - mu) / (cfg.rho3 + lam_sum);
    out.C[k] = std::min(std::max(raw, 0.0), cfg.F_g[gk]);
  }
  return out;
}

DualGradient dual_gradient(const PrimalState& primal_star,
                           const SurrogateCoeffs& coeffs,
                           const ProblemConfig& cfg) {
  const int G = cfg.G, K = cfg.K, T = cfg.T;
  const bool pcp = coeffs.model.per_cluster_power;
  DualGradient g;
  g.delta = RMat::Zero(T, pcp ? G : 1);
  g.lambda = RMat::Zero(T, K);

  std::vector<CMat> V_t(G);
  for (int t = 0; t < T; ++t) {
    for (int gi = 0; gi < G; ++gi) V_t[gi] = primal_star.V[gi][t];
    if (pcp) {
      for (int gi = 0; gi < G; ++gi)
        g.delta(t, gi) = V_t[gi].squaredNorm() - cfg.P_tot;
    } else {
      double power = 0.0;
      for (int gi = 0; gi < G; ++gi) power += V_t[gi].squaredNorm();
      g.delta(t, 0) = power - cfg.P_tot;
    }
    for (int k = 0; k < K; ++k) {
      int gk = cfg.cluster_of[k];
      g.lambda(t, k) = eval_f(coeffs.at(k, t), primal_star.C[k],
                              primal_star.eta[gk][t], V_t);
    }
  }
  double cache = 0.0;
  for (int k = 0; k < K; ++k) cache += primal_star.C[k];
  g.mu = cache - cfg.C_tot;
  return g;
}

double dual_objective_value(const PrimalState& primal_star, const RMat& delta,
                            const RMat& lambda, double mu,
                            const DualGradient& grad_at_star,
                            const PrimalState& expansion,
                            const ProblemConfig& cfg) {
  double upsilon = 0.0;
  for (int t = 0; t < cfg.T; ++t)
    for (int g = 0; g < cfg.G; ++g) {
      double de = primal_star.eta[g][t] - expansion.eta[g][t];
      upsilon += -cfg.F_g[g] * primal_star.eta[g][t] +
                 0.5 * cfg.rho1 * de * de +
                 cfg.rho2 * (primal_star.V[g][t] - expansion.V[g][t]).squaredNorm();
    }
  for (int k = 0; k < cfg.K; ++k) {
    double dc = primal_star.C[k] - expansion.C[k];
    upsilon += 0.5 * cfg.rho3 * dc * dc;
  }
  double D = upsilon + mu * grad_at_star.mu;
  D += (delta.array() * grad_at_star.delta.array()).sum();
  D += (lambda.array() * grad_at_star.lambda.array()).sum();
  return D;
}

void projected_step(DualState& dual, const DualGradient& g, double beta) {
  dual.delta = (dual.delta + beta * g.delta).cwiseMax(0.0);
  dual.lambda = (dual.lambda + beta * g.lambda).cwiseMax(0.0);
  dual.mu = std::max(dual.mu + beta * g.mu, 0.0);
  dual.delta_work = dual.delta;
  dual.lambda_work = dual.lambda;
  dual.mu_work = dual.mu;
  ++dual.s;
}

void momentum_step(DualState& dual, const DualGradient& g, double beta,
                   bool force_zero_momentum) {
  dual.theta_prev = dual.theta;
  dual.theta = next_theta(dual.theta_prev);
  RMat delta_t = (dual.delta_work + beta * g.delta).cwiseMax(0.0);
  RMat lambda_t = (dual.lambda_work + beta * g.lambda).cwiseMax(0.0);
  double mu_t = std::max(dual.mu_work + beta * g.mu, 0.0);
  double w = force_zero_momentum ? 0.0 : (dual.theta_prev - 1.0) / dual.theta;
  if (w == 0.0) {
    dual.delta_work = delta_t;
    dual.lambda_work = lambda_t;
    dual.mu_work = mu_t;
  } else {
    dual.delta_work = delta_t + w * (delta_t - dual.delta_prev);
    dual.lambda_work = lambda_t + w * (lambda_t - dual.lambda_prev);
    dual.mu_work = mu_t + w * (mu_t - dual.mu_prev);
  }
  dual.delta_prev = delta_t;
  dual.lambda_prev = lambda_t;
  dual.mu_prev = mu_t;
  dual.delta = std::move(delta_t);
  dual.lambda = std::move(lambda_t);
  dual.mu = mu_t;
  ++dual.s;
}

namespace {

void restart_momentum(DualState& dual) {
  dual.theta = 1.0;
  dual.theta_prev = 1.0;
  dual.delta_work = dual.delta;
  dual.lambda_work = dual.lambda;
  dual.mu_work = dual.mu;
  dual.delta_prev = dual.delta;
  dual.lambda_prev = dual.lambda;
  dual.mu_prev = dual.mu;
}

}  // namespace

SubproblemSolution solve_subproblem(const PrimalState& expansion,
                                    const SurrogateCoeffs& coeffs,
                                    const ProblemConfig& cfg,
                                    const SubproblemOptions& opts) {
  DualState dual = make_initial_dual(cfg, coeffs.model);
  double beta = cfg.beta;
  double D_prev = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  long s = 0;

  if (opts.trace) *opts.trace << "s,D,max_violation,theta\n";

  while (s < opts.max_iterations) {
    ++s;
    PrimalState star =
        recover_primal(dual.delta_work, dual.lambda_work, dual.mu_work, coeffs,
                       expansion, cfg, opts.fix_beamformers);
    DualGradient g = dual_gradient(star, coeffs, cfg);
    double D = dual_objective_value(star, dual.delta_work, dual.lambda_work,
                                    dual.mu_work, g, expansion, cfg);
    if (opts.trace)
      *opts.trace << s << ',' << D << ',' << max_constraint_violation(g) << ','
                  << dual.theta << '\n';
    if (opts.objective_trace) opts.objective_trace->push_back(D);
    if (!std::isnan(D_prev) &&
        std::abs(D - D_prev) / std::max(std::abs(D), 1.0) < cfg.tol_inner) {
      converged = true;
      break;
    }
    if (opts.mode == SolverMode::accelerated) {
      if (opts.adaptive_restart && !opts.force_zero_momentum &&
          !std::isnan(D_prev) && D < D_prev) {
        restart_momentum(dual);
        star = recover_primal(dual.delta_work, dual.lambda_work, dual.mu_work,
                              coeffs, expansion, cfg, opts.fix_beamformers);
        g = dual_gradient(star, coeffs, cfg);
        D = dual_objective_value(star, dual.delta_work, dual.lambda_work,
                                 dual.mu_work, g, expansion, cfg);
      }
      momentum_step(dual, g, beta, opts.force_zero_momentum);
    } else {
      projected_step(dual, g, beta);
    }
    if (opts.backtracking && !std::isnan(D_prev) && D < D_prev)
      beta = std::max(beta * 0.5, 1e-12);
    D_prev = D;
  }

  SubproblemSolution sol;
  sol.primal = recover_primal(dual.delta, dual.lambda, dual.mu, coeffs,
                              expansion, cfg, opts.fix_beamformers);
  DualGradient g_final = dual_gradient(sol.primal, coeffs, cfg);
  sol.dual_objective =
      dual_objective_value(sol.primal, dual.delta, dual.lambda, dual.mu,
                           g_final, expansion, cfg);
  sol.dual = std::move(dual);
  sol.iterations = s;
  sol.converged = converged;
  return sol;
}

McmbSubproblemSolution solve_mcmb_subproblem(
    const std::vector<CMat>& V_i, const std::vector<double>& eta_i,
    const std::vector<double>& C_fixed, const SurrogateCoeffs& coeffs,
    const ProblemConfig& cfg, const SubproblemOptions& opts) {
  const int G = cfg.G, K = cfg.K, M = cfg.M;
  const auto clusters = cfg.clusters();
  const bool interference = coeffs.model.interference;

  RVec lambda = RVec::Ones(K), lambda_prev = lambda, lambda_work = lambda;
  double delta = 1.0, delta_prev = 1.0, delta_work = 1.0;
  double theta_prev = 1.0;
  double beta = cfg.beta;

  std::vector<CMat> V(G);
  std::vector<double> eta(G, 0.0);
  RVec g_lambda(K);
  double g_delta = 0.0, D = 0.0;

  auto recover_and_grad = [&](const RVec& lam, double del) {
    for (int g = 0; g < G; ++g) {
      double slack = 0.0;
      for (int k : clusters[g])
        slack += lam(k) * (cfg.F_g[g] - C_fixed[k]);
      eta[g] = eta_i[g] + (cfg.F_g[g] - slack) / cfg.rho1;
    }
    if (interference) {
      CMat S = (cfg.rho2 + del) * CMat::Identity(M, M);
      for (int k = 0; k < K; ++k) S.noalias() += lam(k) * coeffs.at(k, 0).A;
      Eigen::LDLT<CMat> ldlt(S);
      for (int g = 0; g < G; ++g) {
        CMat rhs = cfg.rho2 * V_i[g];
        for (int k : clusters[g])
          rhs.noalias() -= lam(k) * coeffs.at(k, 0).B.adjoint();
        V[g] = ldlt.solve(rhs);
      }
    } else {
      for (int g = 0; g < G; ++g) {
        CMat S = (cfg.rho2 + del) * CMat::Identity(M, M);
        for (int k : clusters[g]) S.noalias() += lam(k) * coeffs.at(k, 0).A;
        CMat rhs = cfg.rho2 * V_i[g];
        for (int k : clusters[g])
          rhs.noalias() -= lam(k) * coeffs.at(k, 0).B.adjoint();
        V[g] = Eigen::LDLT<CMat>(S).solve(rhs);
      }
    }
    double power = 0.0;
    double upsilon = 0.0;
    for (int g = 0; g < G; ++g) {
      power += V[g].squaredNorm();
      double de = eta[g] - eta_i[g];
      upsilon += -cfg.F_g[g] * eta[g] + 0.5 * cfg.rho1 * de * de +
                 cfg.rho2 * (V[g] - V_i[g]).squaredNorm();
    }
    g_delta = power - cfg.P_tot;
    for (int k = 0; k < K; ++k) {
      int gk = cfg.cluster_of[k];
      g_lambda(k) =
          (cfg.F_g[gk] - C_fixed[k]) * eta[gk] + eval_h(coeffs.at(k, 0), V);
    }
    D = upsilon + del * g_delta + lam.dot(g_lambda);
  };

  double D_prev = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  long s = 0;
  while (s < opts.max_iterations) {
    ++s;
    recover_and_grad(lambda_work, delta_work);
    if (!std::isnan(D_prev) &&
        std::abs(D - D_prev) / std::max(std::abs(D), 1.0) < cfg.tol_inner) {
      converged = true;
      break;
    }
    if (opts.mode == SolverMode::accelerated) {
      if (opts.adaptive_restart && !std::isnan(D_prev) && D < D_prev) {
        theta_prev = 1.0;
        lambda_work = lambda;
        delta_work = delta;
        lambda_prev = lambda;
        delta_prev = delta;
        recover_and_grad(lambda_work, delta_work);
      }
      double theta = next_theta(theta_prev);
      RVec lambda_t = (lambda_work + beta * g_lambda).cwiseMax(0.0);
      double delta_t = std::max(delta_work + beta * g_delta, 0.0);
      double w = opts.force_zero_momentum ? 0.0 : (theta_prev - 1.0) / theta;
      if (w == 0.0) {
        lambda_work = lambda_t;
        delta_work = delta_t;
      } else {
        lambda_work = lambda_t + w * (lambda_t - lambda_prev);
        delta_work = delta_t + w * (delta_t - delta_prev);
      }
      lambda_prev = lambda_t;
      delta_prev = delta_t;
      lambda = std::move(lambda_t);
      delta = delta_t;
      theta_prev = theta;
    } else {
      lambda = (lambda + beta * g_lambda).cwiseMax(0.0);
      delta = std::max(delta + beta * g_delta, 0.0);
      lambda_work = lambda;
      delta_work = delta;
    }
    D_prev = D;
  }

  recover_and_grad(lambda, delta);
  McmbSubproblemSolution sol;
  sol.V = V;
  sol.eta = eta;
  sol.lambda = lambda;
  sol.delta = delta;
  sol.dual_objective = D;
  sol.iterations = s;
  sol.converged = converged;
  return sol;
}

}  // namespace cranopt
