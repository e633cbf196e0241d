#include "cranopt/surrogate.hpp"

#include <cmath>

namespace cranopt {

namespace {

// log det of a Hermitian positive definite matrix via LDLT, with a
// conditioning guard on the pivots.
double hermitian_logdet_checked(const Eigen::LDLT<CMat>& ldlt,
                                const char* what) {
  auto d = ldlt.vectorD();
  double dmin = std::numeric_limits<double>::infinity();
  double dmax = 0.0;
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    double di = d(i).real();  // LDLT of a Hermitian matrix has real pivots
    if (!(di > 0))
      throw numeric_error(std::string(what) +
                          ": pivot matrix is not positive definite");
    dmin = std::min(dmin, di);
    dmax = std::max(dmax, di);
    logdet += std::log(di);
  }
  if (dmax / dmin > 1e12)
    throw numeric_error(std::string(what) +
                        ": pivot matrix conditioning beyond 1e12");
  return logdet;
}

}  // namespace

CoeffEntry expansion_coefficients(const CMat& H_kt,
                                  const std::vector<CMat>& V_all_i, int g_k,
                                  double sigma2_k, double eta_i, double C_i,
                                  double F_gk, const ModelOptions& model) {
  if (!(sigma2_k > 0)) throw domain_error("sigma2 must be positive");
  if (!H_kt.allFinite())
    throw domain_error("non-finite channel entries at expansion point");
  const Eigen::Index n = H_kt.rows();
  const Eigen::Index d = V_all_i[g_k].cols();

  CMat X = sigma2_k * CMat::Identity(n, n);
  if (model.interference) {
    for (const CMat& Vg : V_all_i) {
      CMat HV = H_kt * Vg;
      X.noalias() += HV * HV.adjoint();
    }
  } else {
    CMat HV = H_kt * V_all_i[g_k];
    X.noalias() += HV * HV.adjoint();
  }

  CoeffEntry e;
  e.g_k = g_k;
  e.eta_i = eta_i;
  e.C_i = C_i;
  e.F = F_gk;
  e.interference = model.interference;

  CMat HVk = H_kt * V_all_i[g_k];
  e.U = Eigen::LLT<CMat>(X).solve(HVk);
  e.Q = CMat::Identity(d, d) - e.U.adjoint() * HVk;
  e.Q = 0.5 * (e.Q + e.Q.adjoint());

  Eigen::LDLT<CMat> qldlt(e.Q);
  double logdet_q = hermitian_logdet_checked(qldlt, "expansion_coefficients");

  CMat UHH = e.U.adjoint() * H_kt;          // d x M
  CMat QinvUHH = qldlt.solve(UHH);          // d x M
  e.A = UHH.adjoint() * QinvUHH;            // M x M
  e.A = 0.5 * (e.A + e.A.adjoint());
  e.B = -QinvUHH;

  CMat inner = CMat::Identity(d, d) + sigma2_k * (e.U.adjoint() * e.U);
  double tr = qldlt.solve(inner).trace().real();
  e.b = tr + logdet_q + 0.5 * (eta_i + C_i) * (eta_i + C_i) -
        static_cast<double>(d);
  if (!std::isfinite(e.b))
    throw numeric_error("expansion_coefficients: non-finite offset");
  return e;
}

double eval_f(const CoeffEntry& e, double C_k, double eta,
              const std::vector<CMat>& V_all) {
  double acc = 0.0;
  if (e.interference) {
    for (const CMat& Vg : V_all)
      acc += (Vg.adjoint() * e.A * Vg).trace().real();
  } else {
    const CMat& Vg = V_all[e.g_k];
    acc += (Vg.adjoint() * e.A * Vg).trace().real();
  }
  acc += 2.0 * (e.B * V_all[e.g_k]).trace().real();
  acc += 0.5 * (eta * eta + C_k * C_k) + e.F * eta -
         (e.eta_i + e.C_i) * (eta + C_k) + e.b;
  return acc;
}

CoeffEntry mcmb_coefficients(const CMat& H_k, const std::vector<CMat>& V_all_i,
                             int g_k, double sigma2_k,
                             const ModelOptions& model) {
  return expansion_coefficients(H_k, V_all_i, g_k, sigma2_k, 0.0, 0.0, 0.0,
                                model);
}

double eval_h(const CoeffEntry& e, const std::vector<CMat>& V_all) {
  double acc = 0.0;
  if (e.interference) {
    for (const CMat& Vg : V_all)
      acc += (Vg.adjoint() * e.A * Vg).trace().real();
  } else {
    const CMat& Vg = V_all[e.g_k];
    acc += (Vg.adjoint() * e.A * Vg).trace().real();
  }
  acc += 2.0 * (e.B * V_all[e.g_k]).trace().real();
  return acc + e.b;
}

SurrogateCoeffs compute_all_coefficients(
    const ProblemConfig& cfg, const std::vector<std::vector<CMat>>& H,
    const PrimalState& expansion, const ModelOptions& model) {
  SurrogateCoeffs out;
  out.K = cfg.K;
  out.T = cfg.T;
  out.model = model;
  out.entries.resize(static_cast<size_t>(cfg.K) * cfg.T);
  parallel_for(cfg.T, [&](int t) {
    std::vector<CMat> V_t(cfg.G);
    for (int g = 0; g < cfg.G; ++g) V_t[g] = expansion.V[g][t];
    for (int k = 0; k < cfg.K; ++k) {
      int gk = cfg.cluster_of[k];
      out.at(k, t) = expansion_coefficients(
          H[k][t], V_t, gk, cfg.sigma2[k], expansion.eta[gk][t],
          expansion.C[k], cfg.F_g[gk], model);
    }
  });
  return out;
}

}  // namespace cranopt
