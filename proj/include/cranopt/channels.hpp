#pragma once

#include <string>
#include <vector>

#include "cranopt/common.hpp"
#include "cranopt/core_model.hpp"

namespace cranopt {

// The T sampled backhaul channel matrices per BS plus everything needed to
// regenerate or validate them.
struct ChannelSet {
  int K = 0, G = 0, M = 0, N = 0, T = 0;
  std::uint64_t seed = 0;
  std::string generator;            // RNG identifier, recorded in the file
  std::vector<double> distances_m;  // [K]
  std::vector<double> pathloss_db;  // [K]
  double antenna_gain_db = 0.0;
  std::string config_fingerprint;
  std::vector<std::vector<CMat>> H;  // [K][T], each N x M
};

// 128.1 + 37.6 log10(D_km), D given in meters.
double path_loss_db(double distance_m);

// Noise power in watts from a PSD in dBm/Hz and a bandwidth in Hz.
double noise_power(double psd_dbm_per_hz, double bandwidth_hz);

// Linear per-entry channel power for a link budget in dB.
inline double linear_gain(double antenna_gain_db, double pathloss_db) {
  return std::pow(10.0, (antenna_gain_db - pathloss_db) / 10.0);
}

// Draws H[k][t] i.i.d. circular complex Gaussian with per-entry variance set
// by the path-loss/antenna-gain link budget. Deterministic given the seed;
// per-(k,t) substreams are order-independent.
ChannelSet sample_channels(const ProblemConfig& cfg,
                           const std::vector<double>& distances_m,
                           double antenna_gain_db, std::uint64_t seed);

// File format: one JSON metadata line, a CSV header line, then rows
// t,k,row,col,re,im with round-trip-exact decimal doubles.
void save_channels(const ChannelSet& set, const std::string& path);
ChannelSet load_channels(const std::string& path);

}  // namespace cranopt
