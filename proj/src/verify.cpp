#include "cranopt/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cranopt/dual_solver.hpp"
#include "cranopt/rng.hpp"
#include "cranopt/surrogate.hpp"

namespace cranopt {

RVec fd_gradient(const std::function<double(const RVec&)>& f, const RVec& x,
                 double step) {
  if (!(step > 0)) throw domain_error("fd step must be positive");
  RVec g(x.size());
  RVec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + step;
    double fp = f(xp);
    xp(i) = x(i) - step;
    double fm = f(xp);
    xp(i) = x(i);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw numeric_error("fd_gradient: non-finite evaluation at coordinate " +
                          std::to_string(i));
    g(i) = (fp - fm) / (2.0 * step);
  }
  return g;
}

namespace {

// Flattened real view of (C_k, eta, {V_g}) for one constraint's arguments.
struct FlatPoint {
  double C;
  double eta;
  std::vector<CMat> V;
};

RVec flatten(const FlatPoint& p) {
  int G = static_cast<int>(p.V.size());
  Eigen::Index n = 2;
  for (int g = 0; g < G; ++g) n += 2 * p.V[g].size();
  RVec x(n);
  x(0) = p.C;
  x(1) = p.eta;
  Eigen::Index at = 2;
  for (int g = 0; g < G; ++g)
    for (Eigen::Index i = 0; i < p.V[g].size(); ++i) {
      x(at++) = p.V[g].data()[i].real();
      x(at++) = p.V[g].data()[i].imag();
    }
  return x;
}

FlatPoint unflatten(const RVec& x, const FlatPoint& shape) {
  FlatPoint p = shape;
  p.C = x(0);
  p.eta = x(1);
  Eigen::Index at = 2;
  for (auto& Vg : p.V)
    for (Eigen::Index i = 0; i < Vg.size(); ++i) {
      Vg.data()[i] = cxd(x(at), x(at + 1));
      at += 2;
    }
  return p;
}

}  // namespace

OracleResult check_prop1(const ProblemConfig& cfg,
                         const std::vector<std::vector<CMat>>& H,
                         int n_samples, std::uint64_t seed) {
  OracleResult res;
  res.name = "prop1_surrogate";
  res.seed = seed;
  std::mt19937_64 rng(splitmix64(seed));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  auto rand_V = [&](double scale) {
    std::vector<CMat> V(cfg.G);
    for (int g = 0; g < cfg.G; ++g) {
      V[g] = CMat(cfg.M, cfg.d());
      for (Eigen::Index i = 0; i < V[g].size(); ++i)
        V[g].data()[i] = scale * cxd(gauss(rng), gauss(rng));
    }
    return V;
  };

  double worst_dom = 0.0;      // most negative dominance margin
  double worst_eq = 0.0;       // worst expansion-point equality deviation
  double worst_grad = 0.0;     // worst relative fd-gradient deviation
  const double fd_step = 1e-5;
  double vscale = std::sqrt(cfg.P_tot / (cfg.G * cfg.M * cfg.d()));

  int probes_per_expansion = 10;
  int n_expansions = (n_samples + probes_per_expansion - 1) / probes_per_expansion;
  int done = 0;
  for (int e = 0; e < n_expansions && done < n_samples; ++e) {
    int k = static_cast<int>(rng() % cfg.K);
    int t = static_cast<int>(rng() % cfg.T);
    int gk = cfg.cluster_of[k];
    double F = cfg.F_g[gk];
    std::vector<CMat> Vi = rand_V(vscale);
    double Ci = unif(rng) * 0.8 * F;
    double etai = unif(rng);

    CoeffEntry ce = expansion_coefficients(H[k][t], Vi, gk, cfg.sigma2[k],
                                           etai, Ci, F);
    auto original_lhs = [&](const FlatPoint& p) {
      CMat J = interference_inverse(H[k][t], p.V, gk, cfg.sigma2[k]);
      return (F - p.C) * p.eta - mutual_information(H[k][t], p.V[gk], J);
    };

    FlatPoint at{Ci, etai, Vi};
    double eq = std::abs(eval_f(ce, Ci, etai, Vi) - original_lhs(at));
    worst_eq = std::max(worst_eq, eq);

    // gradient match at the expansion point
    RVec x0 = flatten(at);
    auto f_sur = [&](const RVec& x) {
      FlatPoint p = unflatten(x, at);
      return eval_f(ce, p.C, p.eta, p.V);
    };
    auto f_org = [&](const RVec& x) { return original_lhs(unflatten(x, at)); };
    RVec gs = fd_gradient(f_sur, x0, fd_step);
    RVec go = fd_gradient(f_org, x0, fd_step);
    double scale = std::max(go.cwiseAbs().maxCoeff(), 1e-9);
    worst_grad = std::max(worst_grad,
                          (gs - go).cwiseAbs().maxCoeff() / scale);

    for (int p = 0; p < probes_per_expansion && done < n_samples; ++p, ++done) {
      FlatPoint probe = at;
      probe.C = std::clamp(Ci + gauss(rng) * 0.3 * F, 0.0, F);
      probe.eta = etai + gauss(rng) * 0.5;
      for (auto& Vg : probe.V)
        for (Eigen::Index i = 0; i < Vg.size(); ++i)
          Vg.data()[i] += 0.5 * vscale * cxd(gauss(rng), gauss(rng));
      double margin =
          eval_f(ce, probe.C, probe.eta, probe.V) - original_lhs(probe);
      worst_dom = std::min(worst_dom, margin);
    }
  }

  res.samples = done;
  res.max_abs_dev = std::max({worst_eq, -worst_dom});
  res.max_rel_dev = worst_grad;
  res.pass = worst_dom >= -1e-9 && worst_eq <= 1e-8 && worst_grad <= 1e-4;
  res.detail = "dominance_margin=" + std::to_string(worst_dom) +
               " equality=" + std::to_string(worst_eq) +
               " grad_rel=" + std::to_string(worst_grad);
  return res;
}

namespace {

// Oracle-side surrogate value from raw coefficient data. Kept local so the
// Lagrangian oracle does not depend on the implementation it checks.
double oracle_f(const CoeffEntry& e, double C, double eta,
                const std::vector<CMat>& V) {
  double acc = 0.0;
  if (e.interference) {
    for (const CMat& Vg : V) acc += (Vg.adjoint() * e.A * Vg).trace().real();
  } else {
    acc += (V[e.g_k].adjoint() * e.A * V[e.g_k]).trace().real();
  }
  acc += 2.0 * (e.B * V[e.g_k]).trace().real();
  return acc + 0.5 * (eta * eta + C * C) + e.F * eta -
         (e.eta_i + e.C_i) * (eta + C) + e.b;
}

}  // namespace

OracleResult check_prop2(const ProblemConfig& cfg,
                         const std::vector<std::vector<CMat>>& H,
                         int n_duals, std::uint64_t seed) {
  OracleResult res;
  res.name = "prop2_recovery";
  res.seed = seed;
  res.samples = n_duals;
  if (!(cfg.rho1 > 0 && cfg.rho2 > 0 && cfg.rho3 > 0)) {
    res.pass = false;
    res.detail = "invalid input: prox weights must be positive";
    return res;
  }
  std::mt19937_64 rng(splitmix64(seed ^ 0x51ULL));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int G = cfg.G, K = cfg.K, T = cfg.T;
  auto clusters = cfg.clusters();

  // random expansion point
  PrimalState exp;
  exp.C.resize(K);
  for (int k = 0; k < K; ++k)
    exp.C[k] = unif(rng) * 0.7 * cfg.F_g[cfg.cluster_of[k]];
  exp.V.assign(G, std::vector<CMat>(T));
  exp.eta.assign(G, std::vector<double>(T));
  double vscale = std::sqrt(cfg.P_tot / (cfg.G * cfg.M * cfg.d()));
  for (int g = 0; g < G; ++g)
    for (int t = 0; t < T; ++t) {
      exp.V[g][t] = CMat(cfg.M, cfg.d());
      for (Eigen::Index i = 0; i < exp.V[g][t].size(); ++i)
        exp.V[g][t].data()[i] = vscale * cxd(gauss(rng), gauss(rng));
      exp.eta[g][t] = unif(rng);
    }
  SurrogateCoeffs coeffs = compute_all_coefficients(cfg, H, exp);

  double worst = 0.0;
  for (int trial = 0; trial < n_duals; ++trial) {
    RMat delta(T, 1), lambda(T, K);
    for (int t = 0; t < T; ++t) {
      delta(t, 0) = 2.0 * unif(rng);
      for (int k = 0; k < K; ++k) lambda(t, k) = 2.0 * unif(rng);
    }
    double mu = 2.0 * unif(rng);

    // subject: closed-form recovery
    PrimalState closed = recover_primal(delta, lambda, mu, coeffs, exp, cfg);

    // oracle: projected gradient descent on the partial Lagrangian with a
    // conservative global step size
    PrimalState x = exp;
    double lam_max_t = 0.0, lam_max_k = 0.0, a_norm = 0.0;
    for (int t = 0; t < T; ++t) {
      double st = 0.0;
      for (int k = 0; k < K; ++k) st += lambda(t, k);
      lam_max_t = std::max(lam_max_t, st);
      for (int k = 0; k < K; ++k)
        a_norm = std::max(a_norm, coeffs.at(k, t).A.norm());
    }
    for (int k = 0; k < K; ++k) {
      double sk = 0.0;
      for (int t = 0; t < T; ++t) sk += lambda(t, k);
      lam_max_k = std::max(lam_max_k, sk);
    }
    double L_eta = cfg.rho1 + lam_max_t;
    double L_C = cfg.rho3 + lam_max_k;
    double L_V = 2.0 * (cfg.rho2 + delta.maxCoeff() + lam_max_t * a_norm);
    double step = 1.0 / std::max({L_eta, L_C, L_V});

    for (long it = 0; it < 200000; ++it) {
      double max_move = 0.0;
      for (int t = 0; t < T; ++t) {
        std::vector<CMat> V_t(G);
        for (int g = 0; g < G; ++g) V_t[g] = x.V[g][t];
        for (int g = 0; g < G; ++g) {
          double ge = -cfg.F_g[g] + cfg.rho1 * (x.eta[g][t] - exp.eta[g][t]);
          for (int k : clusters[g])
            ge += lambda(t, k) *
                  (x.eta[g][t] + cfg.F_g[g] - exp.eta[g][t] - exp.C[k]);
          double ne = x.eta[g][t] - step * ge;
          max_move = std::max(max_move, std::abs(ne - x.eta[g][t]));
          x.eta[g][t] = ne;

          CMat gv = 2.0 * cfg.rho2 * (V_t[g] - exp.V[g][t]) +
                    2.0 * delta(t, 0) * V_t[g];
          for (int k = 0; k < K; ++k)
            gv.noalias() += 2.0 * lambda(t, k) * (coeffs.at(k, t).A * V_t[g]);
          for (int k : clusters[g])
            gv.noalias() += 2.0 * lambda(t, k) * coeffs.at(k, t).B.adjoint();
          CMat nv = V_t[g] - step * gv;
          max_move = std::max(max_move, (nv - V_t[g]).cwiseAbs().maxCoeff());
          x.V[g][t] = nv;
        }
      }
      for (int k = 0; k < K; ++k) {
        int gk = cfg.cluster_of[k];
        double gc = mu + cfg.rho3 * (x.C[k] - exp.C[k]);
        for (int t = 0; t < T; ++t)
          gc += lambda(t, k) * (x.C[k] - exp.eta[gk][t] - exp.C[k]);
        double nc = std::clamp(x.C[k] - step * gc, 0.0, cfg.F_g[gk]);
        max_move = std::max(max_move, std::abs(nc - x.C[k]));
        x.C[k] = nc;
      }
      if (max_move < 1e-12) break;
    }

    for (int k = 0; k < K; ++k)
      worst = std::max(worst, std::abs(closed.C[k] - x.C[k]));
    for (int g = 0; g < G; ++g)
      for (int t = 0; t < T; ++t) {
        worst = std::max(worst, std::abs(closed.eta[g][t] - x.eta[g][t]));
        worst = std::max(
            worst, (closed.V[g][t] - x.V[g][t]).cwiseAbs().maxCoeff());
      }
    (void)oracle_f;  // referenced by the negative-control tests
  }
  res.max_abs_dev = worst;
  res.pass = worst < 1e-6;
  res.detail = "max_coordinate_dev=" + std::to_string(worst);
  return res;
}

std::vector<std::vector<double>> mutual_info_grid(
    const ProblemConfig& cfg, const std::vector<std::vector<CMat>>& H,
    const PrimalState& fixed_V_point) {
  std::vector<std::vector<double>> mi(cfg.K, std::vector<double>(cfg.T, 0.0));
  parallel_for(cfg.T, [&](int t) {
    std::vector<CMat> V_t(cfg.G);
    for (int g = 0; g < cfg.G; ++g) V_t[g] = fixed_V_point.V[g][t];
    for (int k = 0; k < cfg.K; ++k) {
      int gk = cfg.cluster_of[k];
      CMat J = interference_inverse(H[k][t], V_t, gk, cfg.sigma2[k]);
      mi[k][t] = mutual_information(H[k][t], V_t[gk], J);
    }
  });
  return mi;
}

double cache_objective_fixed_V(const ProblemConfig& cfg,
                               const std::vector<std::vector<double>>& mi,
                               const std::vector<double>& C) {
  auto clusters = cfg.clusters();
  double total = 0.0;
  for (int t = 0; t < cfg.T; ++t)
    for (int g = 0; g < cfg.G; ++g) {
      double F = cfg.F_g[g];
      double best = std::numeric_limits<double>::infinity();
      for (int k : clusters[g]) {
        if (is_fully_cached(C[k], F)) continue;
        best = std::min(best, F / (F - C[k]) * mi[k][t]);
      }
      total += best;
    }
  return total;
}

std::vector<double> brute_force_cache(const ProblemConfig& cfg,
                                      const std::vector<std::vector<CMat>>& H,
                                      const PrimalState& fixed_V_point,
                                      double grid_step) {
  if (cfg.K > 3)
    throw domain_error("brute_force_cache: refused for K > 3");
  if (!(grid_step > 0)) throw domain_error("grid step must be positive");
  auto mi = mutual_info_grid(cfg, H, fixed_V_point);

  std::vector<double> best_C(cfg.K, 0.0);
  double best_val = -std::numeric_limits<double>::infinity();
  std::vector<int> steps(cfg.K);
  for (int k = 0; k < cfg.K; ++k)
    steps[k] = static_cast<int>(std::floor(
        cfg.F_g[cfg.cluster_of[k]] / grid_step + 1e-9));

  std::vector<double> C(cfg.K, 0.0);
  std::function<void(int, double)> recurse = [&](int k, double used) {
    if (k == cfg.K) {
      double val = cache_objective_fixed_V(cfg, mi, C);
      if (val > best_val) {
        best_val = val;
        best_C = C;
      }
      return;
    }
    for (int i = 0; i <= steps[k]; ++i) {
      double c = i * grid_step;
      if (used + c > cfg.C_tot + 1e-12) break;
      C[k] = c;
      recurse(k + 1, used + c);
    }
    C[k] = 0.0;
  };
  recurse(0, 0.0);
  return best_C;
}

}  // namespace cranopt
