#pragma once

#include <vector>

#include "cranopt/common.hpp"
#include "cranopt/core_model.hpp"

namespace cranopt {

// Quadratic convexification coefficients of one rate constraint at one
// expansion point, plus the expansion scalars that enter the surrogate.
struct CoeffEntry {
  CMat U;         // N x d
  CMat A;         // M x M, Hermitian PSD
  CMat B;         // d x M
  double b = 0;   // scalar offset
  CMat Q;         // d x d diagnostic, I_d - U^H H V at the expansion point
  double eta_i = 0;
  double C_i = 0;
  double F = 0;   // file size of the BS's cluster
  int g_k = 0;
  // Under the no-interference model the constraint involves only the own
  // cluster's beamformer, so the quadratic term sums over g_k alone.
  bool interference = true;
};

struct SurrogateCoeffs {
  int K = 0, T = 0;
  ModelOptions model;
  std::vector<CoeffEntry> entries;  // index t*K + k
  const CoeffEntry& at(int k, int t) const { return entries[t * K + k]; }
  CoeffEntry& at(int k, int t) { return entries[t * K + k]; }
};

// Coefficients U, A, B, b of the surrogate for BS k's rate constraint,
// expanded at (C_i, eta_i, {V_all_i}). Throws numeric_error if the d x d
// pivot matrix is singular beyond conditioning 1e12 (impossible at a genuine
// expansion point; indicates corrupted input).
CoeffEntry expansion_coefficients(const CMat& H_kt,
                                  const std::vector<CMat>& V_all_i, int g_k,
                                  double sigma2_k, double eta_i, double C_i,
                                  double F_gk, const ModelOptions& model = {});

// Surrogate value at (C_k, eta, {V}). Upper-bounds the rate-constraint
// left-hand side, with equality and matching gradients at the expansion.
double eval_f(const CoeffEntry& e, double C_k, double eta,
              const std::vector<CMat>& V_all);

// Beamforming-only variant of the coefficients: the eta/C contributions of
// the offset are zeroed. Used by the content-delivery design.
CoeffEntry mcmb_coefficients(const CMat& H_k, const std::vector<CMat>& V_all_i,
                             int g_k, double sigma2_k,
                             const ModelOptions& model = {});

// Quadratic upper bound of -log det(.) in the beamformers alone.
double eval_h(const CoeffEntry& e, const std::vector<CMat>& V_all);

// All (k,t) coefficients for one SCA iteration, computed once and stored.
SurrogateCoeffs compute_all_coefficients(const ProblemConfig& cfg,
                                         const std::vector<std::vector<CMat>>& H,
                                         const PrimalState& expansion,
                                         const ModelOptions& model = {});

}  // namespace cranopt
