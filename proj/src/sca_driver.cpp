#include "cranopt/sca_driver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>

#include "cranopt/rng.hpp"

namespace cranopt {

namespace {

double cost_smooth(const ProblemConfig& cfg, const PrimalState& x) {
  double c = 0.0;
  for (int t = 0; t < cfg.T; ++t)
    for (int g = 0; g < cfg.G; ++g) c -= cfg.F_g[g] * x.eta[g][t];
  return c;
}

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(
             clock::now().time_since_epoch())
      .count();
}

}  // namespace

void SolveTrace::write_csv(std::ostream& out) const {
  out << "iteration,objective,inner_iterations,wall_ms,max_residual\n";
  for (const auto& r : rows)
    out << r.iteration << ',' << r.objective << ',' << r.inner_iterations
        << ',' << r.wall_ms << ',' << r.max_residual << '\n';
}

PrimalState initialize_cache_problem(const ProblemConfig& cfg,
                                     const std::vector<std::vector<CMat>>& H,
                                     const ModelOptions& model) {
  cfg.validate();
  const int G = cfg.G, K = cfg.K, T = cfg.T;
  PrimalState x;
  double scale = std::sqrt(cfg.P_tot / (G * cfg.M * cfg.d()));
  CMat V0 = scale * CMat::Ones(cfg.M, cfg.d());
  x.V.assign(G, std::vector<CMat>(T, V0));

  double c0 = cfg.C_tot / K;
  double fmin = *std::min_element(cfg.F_g.begin(), cfg.F_g.end());
  if (c0 >= fmin) {
    std::cerr << "initialize_cache_problem: C_tot/K = " << c0
              << " reaches the smallest file size " << fmin
              << "; clamping the initial cache split to " << 0.99 * fmin
              << "\n";
    c0 = 0.99 * fmin;
  }
  x.C.assign(K, c0);

  x.eta.assign(G, std::vector<double>(T, 0.0));
  auto clusters = cfg.clusters();
  parallel_for(T, [&](int t) {
    std::vector<CMat> V_t(G, V0);
    for (int g = 0; g < G; ++g) {
      double best = std::numeric_limits<double>::infinity();
      for (int k : clusters[g]) {
        CMat J = model.interference
                     ? interference_inverse(H[k][t], V_t, g, cfg.sigma2[k])
                     : CMat((1.0 / cfg.sigma2[k]) *
                            CMat::Identity(cfg.N, cfg.N));
        double mi = mutual_information(H[k][t], V_t[g], J);
        best = std::min(best, mi / (cfg.F_g[g] - x.C[k]));
      }
      x.eta[g][t] = best;
    }
  });
  return x;
}

CacheSolution solve_cache_allocation(const ProblemConfig& cfg,
                                     const ChannelSet& channels,
                                     const SolveOptions& opts) {
  cfg.validate();
  if (channels.K != cfg.K || channels.T != cfg.T || channels.N != cfg.N ||
      channels.M != cfg.M)
    throw domain_error("channel set dimensions do not match the config");

  CacheSolution out;
  PrimalState x = opts.initial_point
                      ? *opts.initial_point
                      : initialize_cache_problem(cfg, channels.H, opts.model);

  SubproblemOptions sub_opts;
  sub_opts.mode = opts.mode;
  sub_opts.max_iterations = opts.max_inner;
  sub_opts.fix_beamformers = opts.fix_beamformers;
  sub_opts.force_zero_momentum = opts.force_zero_momentum;
  sub_opts.adaptive_restart = opts.adaptive_restart;

  std::vector<double> costs;
  costs.push_back(cost_smooth(cfg, x));
  double t_start = now_ms();
  for (int i = 0; i < opts.max_outer; ++i) {
    SurrogateCoeffs coeffs =
        compute_all_coefficients(cfg, channels.H, x, opts.model);
    SubproblemSolution sol = solve_subproblem(x, coeffs, cfg, sub_opts);
    if (!sol.converged) {
      out.primal = std::move(sol.primal);
      out.converged = false;
      out.outer_iterations = i + 1;
      return out;
    }
    x = std::move(sol.primal);
    double cost = cost_smooth(cfg, x);
    costs.push_back(cost);
    TraceRow row;
    row.iteration = i;
    row.objective = cost;
    row.inner_iterations = sol.iterations;
    row.wall_ms = now_ms() - t_start;
    row.max_residual = check_feasibility(cfg, x, 0.0).max_violation();
    out.trace.rows.push_back(row);
    int w = cfg.outer_window;
    if (static_cast<int>(costs.size()) > w) {
      double before = costs[costs.size() - 1 - w];
      double decrease = (before - cost) / std::abs(before);
      if (decrease < cfg.tol_outer) {
        out.converged = true;
        out.outer_iterations = i + 1;
        break;
      }
    }
  }
  if (!out.converged) out.outer_iterations = opts.max_outer;
  out.primal = std::move(x);
  return out;
}

namespace {

// Restriction of an MCMB instance to a subset of clusters (used when whole
// clusters are fully cached and need no backhaul transmission).
struct ClusterRestriction {
  ProblemConfig cfg;
  std::vector<CMat> H;
  std::vector<double> C;
  std::vector<int> cluster_map;  // restricted g -> original g
  std::vector<int> bs_map;       // restricted k -> original k
};

ClusterRestriction restrict_clusters(const ProblemConfig& cfg,
                                     const std::vector<CMat>& H,
                                     const std::vector<double>& C,
                                     const std::vector<int>& keep) {
  ClusterRestriction r;
  r.cluster_map = keep;
  r.cfg = cfg;
  r.cfg.G = static_cast<int>(keep.size());
  r.cfg.T = 1;
  r.cfg.F_g.clear();
  r.cfg.cluster_of.clear();
  r.cfg.sigma2.clear();
  std::vector<int> inv(cfg.G, -1);
  for (int gi = 0; gi < static_cast<int>(keep.size()); ++gi) {
    inv[keep[gi]] = gi;
    r.cfg.F_g.push_back(cfg.F_g[keep[gi]]);
  }
  for (int k = 0; k < cfg.K; ++k) {
    int gi = inv[cfg.cluster_of[k]];
    if (gi < 0) continue;
    r.bs_map.push_back(k);
    r.cfg.cluster_of.push_back(gi);
    r.cfg.sigma2.push_back(cfg.sigma2[k]);
    r.H.push_back(H[k]);
    r.C.push_back(C[k]);
  }
  r.cfg.K = static_cast<int>(r.bs_map.size());
  return r;
}

// Algorithm-4 style SCA loop on an instance where every cluster still needs
// backhaul. Returns the beamformers only.
std::vector<CMat> mcmb_core(const ProblemConfig& cfg,
                            const std::vector<CMat>& H,
                            const std::vector<double>& C_fixed,
                            const SolveOptions& opts, SolveTrace& trace,
                            bool& converged) {
  const int G = cfg.G;
  auto clusters = cfg.clusters();
  double scale = std::sqrt(cfg.P_tot / (G * cfg.M * cfg.d()));
  std::vector<CMat> V(G, scale * CMat::Ones(cfg.M, cfg.d()));
  std::vector<double> eta(G, 0.0);
  for (int g = 0; g < G; ++g) {
    double best = std::numeric_limits<double>::infinity();
    for (int k : clusters[g]) {
      if (is_fully_cached(C_fixed[k], cfg.F_g[g])) continue;
      CMat J = opts.model.interference
                   ? interference_inverse(H[k], V, g, cfg.sigma2[k])
                   : CMat((1.0 / cfg.sigma2[k]) *
                          CMat::Identity(cfg.N, cfg.N));
      double mi = mutual_information(H[k], V[g], J);
      best = std::min(best, mi / (cfg.F_g[g] - C_fixed[k]));
    }
    eta[g] = best;
  }

  SubproblemOptions sub_opts;
  sub_opts.mode = opts.mode;
  sub_opts.max_iterations = opts.max_inner;
  sub_opts.adaptive_restart = opts.adaptive_restart;
  sub_opts.force_zero_momentum = opts.force_zero_momentum;

  ProblemConfig cfg1 = cfg;
  cfg1.T = 1;
  converged = false;
  double cost_prev = std::numeric_limits<double>::quiet_NaN();
  double t_start = now_ms();
  for (int i = 0; i < opts.max_outer; ++i) {
    SurrogateCoeffs coeffs;
    coeffs.K = cfg1.K;
    coeffs.T = 1;
    coeffs.model = opts.model;
    coeffs.entries.resize(cfg1.K);
    parallel_for(cfg1.K, [&](int k) {
      coeffs.entries[k] = mcmb_coefficients(H[k], V, cfg1.cluster_of[k],
                                            cfg1.sigma2[k], opts.model);
    });
    McmbSubproblemSolution sol =
        solve_mcmb_subproblem(V, eta, C_fixed, coeffs, cfg1, sub_opts);
    V = sol.V;
    eta = sol.eta;
    double cost = 0.0;
    for (int g = 0; g < G; ++g) cost -= cfg1.F_g[g] * eta[g];
    TraceRow row;
    row.iteration = i;
    row.objective = cost;
    row.inner_iterations = sol.iterations;
    row.wall_ms = now_ms() - t_start;
    row.max_residual = 0.0;
    trace.rows.push_back(row);
    if (!std::isnan(cost_prev) &&
        std::abs(cost - cost_prev) / std::max(std::abs(cost), 1.0) <
            cfg1.tol_inner) {
      converged = true;
      break;
    }
    cost_prev = cost;
  }
  return V;
}

}  // namespace

McmbResult solve_mcmb(const ProblemConfig& cfg,
                      const std::vector<CMat>& H_single,
                      const std::vector<double>& C_fixed,
                      const SolveOptions& opts) {
  if (static_cast<int>(H_single.size()) != cfg.K ||
      static_cast<int>(C_fixed.size()) != cfg.K)
    throw domain_error("solve_mcmb: per-BS inputs must have K entries");
  for (int k = 0; k < cfg.K; ++k) {
    double F = cfg.F_g[cfg.cluster_of[k]];
    if (C_fixed[k] < -1e-12 || C_fixed[k] > F * (1.0 + 1e-12))
      throw domain_error("solve_mcmb: cache size outside its box at BS " +
                         std::to_string(k));
  }
  auto clusters = cfg.clusters();
  std::vector<int> active;
  for (int g = 0; g < cfg.G; ++g) {
    bool all_cached = true;
    for (int k : clusters[g])
      if (!is_fully_cached(C_fixed[k], cfg.F_g[g])) all_cached = false;
    if (!all_cached) active.push_back(g);
  }

  McmbResult out;
  out.V.assign(cfg.G, CMat::Zero(cfg.M, cfg.d()));
  if (!active.empty()) {
    if (static_cast<int>(active.size()) == cfg.G) {
      ProblemConfig cfg1 = cfg;
      cfg1.T = 1;
      out.V = mcmb_core(cfg1, H_single, C_fixed, opts, out.trace,
                        out.converged);
    } else {
      // fully cached clusters need no transmission; solve the rest
      ClusterRestriction r =
          restrict_clusters(cfg, H_single, C_fixed, active);
      std::vector<CMat> Vr =
          mcmb_core(r.cfg, r.H, r.C, opts, out.trace, out.converged);
      for (int gi = 0; gi < static_cast<int>(active.size()); ++gi)
        out.V[active[gi]] = Vr[gi];
    }
  } else {
    out.converged = true;
  }

  // achieved rates under the true interference model
  ProblemConfig cfg1 = cfg;
  cfg1.T = 1;
  PrimalState x;
  x.C = C_fixed;
  x.V.assign(cfg.G, std::vector<CMat>(1));
  for (int g = 0; g < cfg.G; ++g) x.V[g][0] = out.V[g];
  x.eta.assign(cfg.G, std::vector<double>(1, 0.0));
  std::vector<std::vector<CMat>> H(cfg.K);
  for (int k = 0; k < cfg.K; ++k) H[k] = {H_single[k]};
  out.rates = sum_rate(cfg1, H, x);
  return out;
}

int FileCatalog::tuple_count() const {
  int n = 1;
  for (const auto& s : sizes) n *= static_cast<int>(s.size());
  return n;
}

std::vector<int> FileCatalog::tuple_files(int f) const {
  std::vector<int> idx(sizes.size(), 0);
  for (int g = static_cast<int>(sizes.size()) - 1; g >= 0; --g) {
    int n = static_cast<int>(sizes[g].size());
    idx[g] = f % n;
    f /= n;
  }
  return idx;
}

double FileCatalog::tuple_probability(int f) const {
  auto idx = tuple_files(f);
  double p = 1.0;
  for (size_t g = 0; g < sizes.size(); ++g) p *= pops[g][idx[g]];
  return p;
}

void FileCatalog::validate(const ProblemConfig& cfg) const {
  if (static_cast<int>(sizes.size()) != cfg.G ||
      static_cast<int>(pops.size()) != cfg.G)
    throw domain_error("catalog must list files for every cluster");
  for (int g = 0; g < cfg.G; ++g) {
    if (sizes[g].empty() || sizes[g].size() != pops[g].size())
      throw domain_error("catalog sizes/popularities mismatch in cluster " +
                         std::to_string(g));
    double sum = 0.0;
    for (size_t i = 0; i < pops[g].size(); ++i) {
      if (!(sizes[g][i] > 0))
        throw domain_error("catalog file sizes must be positive");
      if (pops[g][i] < 0) throw domain_error("popularities must be >= 0");
      sum += pops[g][i];
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw domain_error("popularities in cluster " + std::to_string(g) +
                         " must sum to 1");
  }
}

std::vector<ChannelSet> sample_tuple_channels(
    const ProblemConfig& cfg, const FileCatalog& catalog,
    const std::vector<double>& distances_m, double antenna_gain_db,
    std::uint64_t seed) {
  catalog.validate(cfg);
  int nf = catalog.tuple_count();
  std::vector<ChannelSet> sets;
  sets.reserve(nf);
  for (int f = 0; f < nf; ++f)
    sets.push_back(sample_channels(
        cfg, distances_m, antenna_gain_db,
        splitmix64(seed ^ (0x7f4a7c15ULL + static_cast<std::uint64_t>(f)))));
  return sets;
}

namespace {

// State of the multi-file problem; beamformers and rates are per request
// tuple, cache sizes are per (BS, file of its cluster).
struct MultiState {
  std::vector<std::vector<double>> C;                 // [K][files]
  std::vector<std::vector<std::vector<CMat>>> V;      // [F][G][T]
  std::vector<std::vector<std::vector<double>>> eta;  // [F][G][T]
};

double multi_cost(const ProblemConfig& cfg, const FileCatalog& cat,
                  const MultiState& x) {
  double c = 0.0;
  int nf = cat.tuple_count();
  for (int f = 0; f < nf; ++f) {
    auto files = cat.tuple_files(f);
    for (int t = 0; t < cfg.T; ++t)
      for (int g = 0; g < cfg.G; ++g)
        c -= cat.pops[g][files[g]] * cat.sizes[g][files[g]] * x.eta[f][g][t];
  }
  return c;
}

}  // namespace

MultiFileSolution solve_multifile(const ProblemConfig& cfg,
                                  const FileCatalog& catalog,
                                  const std::vector<ChannelSet>& tuple_channels,
                                  const SolveOptions& opts) {
  cfg.validate();
  catalog.validate(cfg);
  const int nf = catalog.tuple_count();
  if (static_cast<int>(tuple_channels.size()) != nf)
    throw domain_error("one channel set per request tuple is required");

  bool trivial = true;
  for (int g = 0; g < cfg.G; ++g)
    if (catalog.files_in(g) != 1) trivial = false;
  if (trivial) {
    // single unit-probability file per cluster: the problem reduces to the
    // plain cache allocation on the same channels
    ProblemConfig cfg1 = cfg;
    for (int g = 0; g < cfg.G; ++g) cfg1.F_g[g] = catalog.sizes[g][0];
    CacheSolution sol = solve_cache_allocation(cfg1, tuple_channels[0], opts);
    MultiFileSolution out;
    out.C.assign(cfg.K, std::vector<double>(1, 0.0));
    for (int k = 0; k < cfg.K; ++k) out.C[k][0] = sol.primal.C[k];
    out.trace = std::move(sol.trace);
    out.converged = sol.converged;
    out.outer_iterations = sol.outer_iterations;
    return out;
  }

  const int G = cfg.G, K = cfg.K, T = cfg.T, M = cfg.M;
  auto clusters = cfg.clusters();

  // initialization: equal splits, rates from the resulting mutual information
  MultiState x;
  x.C.assign(K, {});
  for (int k = 0; k < K; ++k) {
    int nfg = catalog.files_in(cfg.cluster_of[k]);
    double c0 = cfg.C_tot / (K * nfg);
    double fmin = *std::min_element(catalog.sizes[cfg.cluster_of[k]].begin(),
                                    catalog.sizes[cfg.cluster_of[k]].end());
    if (c0 >= fmin) c0 = 0.99 * fmin;
    x.C[k].assign(nfg, c0);
  }
  double scale = std::sqrt(cfg.P_tot / (G * M * cfg.d()));
  CMat V0 = scale * CMat::Ones(M, cfg.d());
  x.V.assign(nf, std::vector<std::vector<CMat>>(G, std::vector<CMat>(T, V0)));
  x.eta.assign(nf, std::vector<std::vector<double>>(
                       G, std::vector<double>(T, 0.0)));
  for (int f = 0; f < nf; ++f) {
    auto files = catalog.tuple_files(f);
    const auto& H = tuple_channels[f].H;
    parallel_for(T, [&](int t) {
      std::vector<CMat> V_t(G, V0);
      for (int g = 0; g < G; ++g) {
        double F = catalog.sizes[g][files[g]];
        double best = std::numeric_limits<double>::infinity();
        for (int k : clusters[g]) {
          CMat J = opts.model.interference
                       ? interference_inverse(H[k][t], V_t, g, cfg.sigma2[k])
                       : CMat((1.0 / cfg.sigma2[k]) *
                              CMat::Identity(cfg.N, cfg.N));
          double mi = mutual_information(H[k][t], V_t[g], J);
          best = std::min(best, mi / (F - x.C[k][files[g]]));
        }
        x.eta[f][g][t] = best;
      }
    });
  }

  // per-tuple configs share everything except the file sizes
  std::vector<ProblemConfig> cfg_f(nf, cfg);
  for (int f = 0; f < nf; ++f) {
    auto files = catalog.tuple_files(f);
    for (int g = 0; g < G; ++g) cfg_f[f].F_g[g] = catalog.sizes[g][files[g]];
  }

  MultiFileSolution out;
  std::vector<double> costs;
  costs.push_back(multi_cost(cfg, catalog, x));
  double t_start = now_ms();

  for (int i = 0; i < opts.max_outer; ++i) {
    // expansion coefficients for every tuple
    std::vector<SurrogateCoeffs> coeffs(nf);
    std::vector<std::vector<double>> Ck_of_f(nf);  // cache seen by tuple f
    for (int f = 0; f < nf; ++f) {
      auto files = catalog.tuple_files(f);
      Ck_of_f[f].assign(K, 0.0);
      for (int k = 0; k < K; ++k)
        Ck_of_f[f][k] = x.C[k][files[cfg.cluster_of[k]]];
      PrimalState exp_f;
      exp_f.C = Ck_of_f[f];
      exp_f.V = x.V[f];
      exp_f.eta = x.eta[f];
      coeffs[f] =
          compute_all_coefficients(cfg_f[f], tuple_channels[f].H, exp_f,
                                   opts.model);
    }

    // dual ascent over the coupled multipliers (delta, lambda per (f,t), mu)
    const bool pcp = opts.model.per_cluster_power;
    const int B = pcp ? G : 1;
    std::vector<RMat> delta(nf, RMat::Ones(T, B)), lambda(nf, RMat::Ones(T, K));
    double mu = 1.0;
    auto delta_w = delta;
    auto lambda_w = lambda;
    double mu_w = mu;
    auto delta_p = delta;
    auto lambda_p = lambda;
    double mu_p = mu;
    double theta_prev = 1.0;

    MultiState star = x;
    std::vector<RMat> g_delta(nf, RMat::Zero(T, B)),
        g_lambda(nf, RMat::Zero(T, K));
    double g_mu = 0.0, D = 0.0;

    auto recover_and_grad = [&](const std::vector<RMat>& dl,
                                const std::vector<RMat>& lm, double m) {
      // cache recovery couples tuples through shared (k, file) variables
      for (int k = 0; k < K; ++k) {
        int gk = cfg.cluster_of[k];
        int nfg = catalog.files_in(gk);
        for (int c = 0; c < nfg; ++c) {
          double lam_sum = 0.0, lam_eta = 0.0;
          for (int f = 0; f < nf; ++f) {
            if (catalog.tuple_files(f)[gk] != c) continue;
            for (int t = 0; t < T; ++t) {
              lam_sum += lm[f](t, k);
              lam_eta += lm[f](t, k) * x.eta[f][gk][t];
            }
          }
          double raw =
              x.C[k][c] + (lam_eta - m) / (cfg.rho3 + lam_sum);
          star.C[k][c] =
              std::min(std::max(raw, 0.0), catalog.sizes[gk][c]);
        }
      }
      for (int f = 0; f < nf; ++f) {
        auto files = catalog.tuple_files(f);
        for (int t = 0; t < T; ++t) {
          for (int g = 0; g < G; ++g) {
            double p = catalog.pops[g][files[g]];
            double F = catalog.sizes[g][files[g]];
            double lam_sum = 0.0, lam_C = 0.0;
            for (int k : clusters[g]) {
              lam_sum += lm[f](t, k);
              lam_C += lm[f](t, k) * x.C[k][files[g]];
            }
            star.eta[f][g][t] =
                x.eta[f][g][t] +
                ((p - lam_sum) * F + lam_C) / (cfg.rho1 + lam_sum);
          }
          if (opts.model.interference && !pcp) {
            CMat S = (cfg.rho2 + dl[f](t, 0)) * CMat::Identity(M, M);
            for (int k = 0; k < K; ++k)
              S.noalias() += lm[f](t, k) * coeffs[f].at(k, t).A;
            Eigen::LDLT<CMat> ldlt(S);
            for (int g = 0; g < G; ++g) {
              CMat rhs = cfg.rho2 * x.V[f][g][t];
              for (int k : clusters[g])
                rhs.noalias() -= lm[f](t, k) * coeffs[f].at(k, t).B.adjoint();
              star.V[f][g][t] = ldlt.solve(rhs);
            }
          } else {
            for (int g = 0; g < G; ++g) {
              double dt = pcp ? dl[f](t, g) : dl[f](t, 0);
              CMat S = (cfg.rho2 + dt) * CMat::Identity(M, M);
              if (opts.model.interference) {
                for (int k = 0; k < K; ++k)
                  S.noalias() += lm[f](t, k) * coeffs[f].at(k, t).A;
              } else {
                for (int k : clusters[g])
                  S.noalias() += lm[f](t, k) * coeffs[f].at(k, t).A;
              }
              CMat rhs = cfg.rho2 * x.V[f][g][t];
              for (int k : clusters[g])
                rhs.noalias() -= lm[f](t, k) * coeffs[f].at(k, t).B.adjoint();
              star.V[f][g][t] = Eigen::LDLT<CMat>(S).solve(rhs);
            }
          }
        }
      }
      // gradient = residuals; objective = upsilon + duals . residuals
      double upsilon = 0.0;
      for (int f = 0; f < nf; ++f) {
        auto files = catalog.tuple_files(f);
        for (int t = 0; t < T; ++t) {
          if (pcp) {
            for (int g = 0; g < G; ++g)
              g_delta[f](t, g) = star.V[f][g][t].squaredNorm() - cfg.P_tot;
          } else {
            double power = 0.0;
            for (int g = 0; g < G; ++g) power += star.V[f][g][t].squaredNorm();
            g_delta[f](t, 0) = power - cfg.P_tot;
          }
          std::vector<CMat> V_t(G);
          for (int g = 0; g < G; ++g) V_t[g] = star.V[f][g][t];
          for (int k = 0; k < K; ++k) {
            int gk = cfg.cluster_of[k];
            g_lambda[f](t, k) =
                eval_f(coeffs[f].at(k, t), star.C[k][files[gk]],
                       star.eta[f][gk][t], V_t);
          }
          for (int g = 0; g < G; ++g) {
            double p = catalog.pops[g][files[g]];
            double F = catalog.sizes[g][files[g]];
            double de = star.eta[f][g][t] - x.eta[f][g][t];
            upsilon += -p * F * star.eta[f][g][t] +
                       0.5 * cfg.rho1 * de * de +
                       cfg.rho2 *
                           (star.V[f][g][t] - x.V[f][g][t]).squaredNorm();
          }
        }
      }
      double cache_total = 0.0;
      for (int k = 0; k < K; ++k) {
        int gk = cfg.cluster_of[k];
        for (int c = 0; c < catalog.files_in(gk); ++c) {
          double dc = star.C[k][c] - x.C[k][c];
          upsilon += 0.5 * cfg.rho3 * dc * dc;
          cache_total += star.C[k][c];
        }
      }
      g_mu = cache_total - cfg.C_tot;
      D = upsilon + m * g_mu;
      for (int f = 0; f < nf; ++f) {
        D += (dl[f].array() * g_delta[f].array()).sum();
        D += (lm[f].array() * g_lambda[f].array()).sum();
      }
    };

    double D_prev = std::numeric_limits<double>::quiet_NaN();
    bool inner_converged = false;
    long s = 0;
    long inner_used = 0;
    while (s < opts.max_inner) {
      ++s;
      recover_and_grad(delta_w, lambda_w, mu_w);
      if (!std::isnan(D_prev) &&
          std::abs(D - D_prev) / std::max(std::abs(D), 1.0) < cfg.tol_inner) {
        inner_converged = true;
        break;
      }
      if (opts.mode == SolverMode::accelerated) {
        if (opts.adaptive_restart && !std::isnan(D_prev) && D < D_prev) {
          theta_prev = 1.0;
          delta_w = delta;
          lambda_w = lambda;
          mu_w = mu;
          delta_p = delta;
          lambda_p = lambda;
          mu_p = mu;
          recover_and_grad(delta_w, lambda_w, mu_w);
        }
        double theta =
            0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta_prev * theta_prev));
        double w =
            opts.force_zero_momentum ? 0.0 : (theta_prev - 1.0) / theta;
        for (int f = 0; f < nf; ++f) {
          RMat dt = (delta_w[f] + cfg.beta * g_delta[f]).cwiseMax(0.0);
          RMat lt = (lambda_w[f] + cfg.beta * g_lambda[f]).cwiseMax(0.0);
          delta_w[f] = (w == 0.0) ? dt : RMat(dt + w * (dt - delta_p[f]));
          lambda_w[f] = (w == 0.0) ? lt : RMat(lt + w * (lt - lambda_p[f]));
          delta_p[f] = dt;
          lambda_p[f] = lt;
          delta[f] = std::move(dt);
          lambda[f] = std::move(lt);
        }
        double mt = std::max(mu_w + cfg.beta * g_mu, 0.0);
        mu_w = (w == 0.0) ? mt : mt + w * (mt - mu_p);
        mu_p = mt;
        mu = mt;
        theta_prev = theta;
      } else {
        for (int f = 0; f < nf; ++f) {
          delta[f] = (delta[f] + cfg.beta * g_delta[f]).cwiseMax(0.0);
          lambda[f] = (lambda[f] + cfg.beta * g_lambda[f]).cwiseMax(0.0);
          delta_w[f] = delta[f];
          lambda_w[f] = lambda[f];
        }
        mu = std::max(mu + cfg.beta * g_mu, 0.0);
        mu_w = mu;
      }
      D_prev = D;
    }
    inner_used = s;
    if (!inner_converged) {
      out.converged = false;
      out.outer_iterations = i + 1;
      out.C = x.C;
      return out;
    }
    recover_and_grad(delta, lambda, mu);
    x = star;

    double cost = multi_cost(cfg, catalog, x);
    costs.push_back(cost);
    TraceRow row;
    row.iteration = i;
    row.objective = cost;
    row.inner_iterations = inner_used;
    row.wall_ms = now_ms() - t_start;
    double cache_total = 0.0;
    for (int k = 0; k < K; ++k)
      for (double c : x.C[k]) cache_total += c;
    row.max_residual = std::max(cache_total - cfg.C_tot, 0.0);
    out.trace.rows.push_back(row);

    int w = cfg.outer_window;
    if (static_cast<int>(costs.size()) > w) {
      double before = costs[costs.size() - 1 - w];
      double decrease = (before - cost) / std::abs(before);
      if (decrease < cfg.tol_outer) {
        out.converged = true;
        out.outer_iterations = i + 1;
        break;
      }
    }
  }
  if (!out.converged && out.outer_iterations == 0)
    out.outer_iterations = opts.max_outer;
  out.C = x.C;
  return out;
}

std::vector<double> round_cache(const std::vector<double>& C, double C_tot) {
  std::vector<double> out(C.size());
  for (size_t k = 0; k < C.size(); ++k) out[k] = std::round(C[k]);
  auto total = [&] {
    return std::accumulate(out.begin(), out.end(), 0.0);
  };
  while (total() > C_tot) {
    // decrement the entry that gained most from rounding, lowest index first
    int best = -1;
    double best_gain = -std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < out.size(); ++k) {
      if (out[k] <= 0.0) continue;
      double gain = out[k] - C[k];
      if (gain > best_gain + 1e-15) {
        best_gain = gain;
        best = static_cast<int>(k);
      }
    }
    if (best < 0) break;
    out[best] -= 1.0;
  }
  return out;
}

}  // namespace cranopt
