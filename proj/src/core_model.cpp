#include "cranopt/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cranopt {

using json = nlohmann::json;

std::vector<std::vector<int>> ProblemConfig::clusters() const {
  std::vector<std::vector<int>> sets(G);
  for (int k = 0; k < K; ++k) sets[cluster_of[k]].push_back(k);
  return sets;
}

void ProblemConfig::validate() const {
  if (G < 1 || K < 1) throw domain_error("G and K must be positive");
  if (!(M > N && N >= 1))
    throw domain_error("antenna counts must satisfy M > N >= 1");
  if (static_cast<int>(cluster_of.size()) != K)
    throw domain_error("cluster_of must have K entries");
  std::vector<int> count(G, 0);
  for (int g : cluster_of) {
    if (g < 0 || g >= G) throw domain_error("cluster_of entry out of range");
    ++count[g];
  }
  for (int g = 0; g < G; ++g)
    if (count[g] == 0)
      throw domain_error("cluster " + std::to_string(g) + " is empty");
  if (static_cast<int>(F_g.size()) != G)
    throw domain_error("F_g must have G entries");
  if (static_cast<int>(sigma2.size()) != K)
    throw domain_error("sigma2 must have K entries");
  if (!(P_tot > 0)) throw domain_error("P_tot must be positive");
  if (C_tot < 0) throw domain_error("C_tot must be non-negative");
  for (double f : F_g)
    if (!(f > 0)) throw domain_error("file sizes must be positive");
  for (double s : sigma2)
    if (!(s > 0)) throw domain_error("noise powers must be positive");
  if (!(rho1 > 0 && rho2 > 0 && rho3 > 0))
    throw domain_error("prox weights rho1, rho2, rho3 must be positive");
  if (!(beta > 0)) throw domain_error("beta must be positive");
  if (T < 1) throw domain_error("T must be positive");
  if (!(tol_inner > 0 && tol_outer > 0))
    throw domain_error("tolerances must be positive");
  if (outer_window < 1) throw domain_error("outer_window must be positive");
}

CMat interference_inverse(const CMat& H_k, const std::vector<CMat>& V_all,
                          int g_k, double sigma2_k) {
  if (!(sigma2_k > 0)) throw domain_error("sigma2 must be positive");
  const Eigen::Index n = H_k.rows();
  CMat X = sigma2_k * CMat::Identity(n, n);
  for (int g = 0; g < static_cast<int>(V_all.size()); ++g) {
    if (g == g_k) continue;
    if (V_all[g].rows() != H_k.cols())
      throw domain_error("beamformer/channel dimension mismatch");
    CMat HV = H_k * V_all[g];
    X.noalias() += HV * HV.adjoint();
  }
  Eigen::LLT<CMat> llt(X);
  CMat J = llt.solve(CMat::Identity(n, n));
  // exact Hermitian symmetry for downstream solves
  return 0.5 * (J + J.adjoint());
}

double mutual_information(const CMat& H_k, const CMat& V_gk, const CMat& J_k) {
  if (!H_k.allFinite() || !V_gk.allFinite() || !J_k.allFinite())
    throw domain_error("non-finite entries in mutual_information input");
  const Eigen::Index n = H_k.rows();
  CMat HV = H_k * V_gk;
  CMat Mno = CMat::Identity(n, n) + HV * HV.adjoint() * J_k;
  Eigen::PartialPivLU<CMat> lu(Mno);
  // det(I + H V V^H H^H J) is real positive; the imaginary parts of the
  // diagonal logs cancel
  cxd logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    logdet += std::log(lu.matrixLU()(i, i));
  double sign = lu.permutationP().determinant() < 0 ? -1.0 : 1.0;
  (void)sign;  // determinant is positive; permutation sign folds into phase
  double value = logdet.real();
  return value < 0.0 && value > -1e-12 ? 0.0 : value;
}

RateReport sum_rate(const ProblemConfig& cfg,
                    const std::vector<std::vector<CMat>>& H,
                    const PrimalState& primal, const ModelOptions& model) {
  const int K = cfg.K, G = cfg.G, T = cfg.T;
  for (int k = 0; k < K; ++k) {
    double F = cfg.F_g[cfg.cluster_of[k]];
    if (primal.C[k] > F * (1.0 + 1e-12))
      throw domain_error("cache size exceeds file size at BS " +
                         std::to_string(k));
  }
  RateReport rep;
  rep.mutual_info.assign(K, std::vector<double>(T, 0.0));
  rep.cluster_rate.assign(G, std::vector<double>(T, 0.0));
  rep.sum_rate.assign(T, 0.0);
  rep.sum_rate_bits.assign(T, 0.0);
  rep.fully_cached.assign(K, false);
  for (int k = 0; k < K; ++k)
    rep.fully_cached[k] = is_fully_cached(primal.C[k], cfg.F_g[cfg.cluster_of[k]]);

  auto clusters = cfg.clusters();
  parallel_for(T, [&](int t) {
    std::vector<CMat> V_t(G);
    for (int g = 0; g < G; ++g) V_t[g] = primal.V[g][t];
    for (int k = 0; k < K; ++k) {
      int gk = cfg.cluster_of[k];
      CMat J = model.interference
                   ? interference_inverse(H[k][t], V_t, gk, cfg.sigma2[k])
                   : CMat((1.0 / cfg.sigma2[k]) *
                          CMat::Identity(cfg.N, cfg.N));
      rep.mutual_info[k][t] = mutual_information(H[k][t], V_t[gk], J);
    }
  });
  for (int t = 0; t < T; ++t) {
    for (int g = 0; g < G; ++g) {
      double F = cfg.F_g[g];
      double best = std::numeric_limits<double>::infinity();
      for (int k : clusters[g]) {
        if (rep.fully_cached[k]) continue;
        best = std::min(best, F / (F - primal.C[k]) * rep.mutual_info[k][t]);
      }
      rep.cluster_rate[g][t] = best;  // +inf when every member is cached
      rep.sum_rate[t] += best;
    }
    rep.sum_rate_bits[t] = rep.sum_rate[t] / std::log(2.0);
  }
  return rep;
}

FeasibilityReport check_feasibility(const ProblemConfig& cfg,
                                    const PrimalState& primal, double tol) {
  FeasibilityReport rep;
  double total_cache = 0.0;
  for (int k = 0; k < cfg.K; ++k) {
    double C = primal.C[k];
    double F = cfg.F_g[cfg.cluster_of[k]];
    total_cache += C;
    if (C < -tol)
      rep.violations.push_back({"cache_box_lower[" + std::to_string(k) + "]",
                                -C});
    if (C > F + tol)
      rep.violations.push_back({"cache_box_upper[" + std::to_string(k) + "]",
                                C - F});
  }
  if (total_cache > cfg.C_tot + tol)
    rep.violations.push_back({"cache_budget", total_cache - cfg.C_tot});
  for (int t = 0; t < cfg.T; ++t) {
    if (cfg.G >= 1 && static_cast<int>(primal.V.size()) == cfg.G) {
      double power = 0.0;
      for (int g = 0; g < cfg.G; ++g)
        power += primal.V[g][t].squaredNorm();
      if (power > cfg.P_tot + tol)
        rep.violations.push_back(
            {"power[t=" + std::to_string(t) + "]", power - cfg.P_tot});
    }
  }
  return rep;
}

double FeasibilityReport::max_violation() const {
  double m = 0.0;
  for (const auto& v : violations) m = std::max(m, v.magnitude);
  return m;
}

namespace {

json config_to_json_obj(const ProblemConfig& c) {
  return json{{"G", c.G},
              {"K", c.K},
              {"cluster_of", c.cluster_of},
              {"M", c.M},
              {"N", c.N},
              {"d", c.d()},
              {"P_tot", c.P_tot},
              {"C_tot", c.C_tot},
              {"F_g", c.F_g},
              {"sigma2", c.sigma2},
              {"T", c.T},
              {"rho1", c.rho1},
              {"rho2", c.rho2},
              {"rho3", c.rho3},
              {"beta", c.beta},
              {"tol_inner", c.tol_inner},
              {"tol_outer", c.tol_outer},
              {"outer_window", c.outer_window},
              {"seed", c.seed}};
}

}  // namespace

ProblemConfig problem_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw parse_error(std::string("config JSON: ") + e.what());
  }
  ProblemConfig c;
  try {
    j.at("G").get_to(c.G);
    j.at("K").get_to(c.K);
    j.at("cluster_of").get_to(c.cluster_of);
    j.at("M").get_to(c.M);
    j.at("N").get_to(c.N);
    j.at("P_tot").get_to(c.P_tot);
    j.at("C_tot").get_to(c.C_tot);
    j.at("F_g").get_to(c.F_g);
    if (j.contains("sigma2")) {
      if (j["sigma2"].is_number())
        c.sigma2.assign(c.K, j["sigma2"].get<double>());
      else
        j.at("sigma2").get_to(c.sigma2);
    }
    j.at("T").get_to(c.T);
    c.rho1 = j.value("rho1", c.rho1);
    c.rho2 = j.value("rho2", c.rho2);
    c.rho3 = j.value("rho3", c.rho3);
    c.beta = j.value("beta", c.beta);
    c.tol_inner = j.value("tol_inner", c.tol_inner);
    c.tol_outer = j.value("tol_outer", c.tol_outer);
    c.outer_window = j.value("outer_window", c.outer_window);
    c.seed = j.value("seed", c.seed);
    if (j.contains("d") && j["d"].get<int>() != c.N)
      throw domain_error("d must equal N");
  } catch (const json::exception& e) {
    throw parse_error(std::string("config JSON: ") + e.what());
  }
  c.validate();
  return c;
}

std::string problem_config_to_json(const ProblemConfig& cfg) {
  return config_to_json_obj(cfg).dump(2);
}

ProblemConfig load_problem_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return problem_config_from_json(ss.str());
}

std::string config_fingerprint(const ProblemConfig& cfg) {
  std::string canon = config_to_json_obj(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace cranopt
