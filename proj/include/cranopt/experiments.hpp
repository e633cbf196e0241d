#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cranopt/channels.hpp"
#include "cranopt/common.hpp"
#include "cranopt/core_model.hpp"
#include "cranopt/sca_driver.hpp"

namespace cranopt {

// One experiment definition: the problem instance plus geometry, noise
// budget inputs, evaluation size and the baseline list.
struct ExperimentConfig {
  ProblemConfig problem;
  std::vector<double> distances_m;
  double antenna_gain_db = 17.0;
  double noise_psd_dbm_per_hz = -150.0;
  double bandwidth_hz = 20e6;
  int eval_realizations = 400;
  std::uint64_t eval_seed = 1;
  std::vector<std::string> baselines;  // uniform | timedivision | ignore_interference
  std::optional<FileCatalog> catalog;
  SolveOptions solver;
};

struct ExperimentReport {
  std::string scheme;
  std::vector<double> rates_bps_hz;  // one entry per evaluation realization
  std::vector<std::pair<double, double>> cdf;  // (rate, probability)
  double average_bps_hz = 0.0;
  std::vector<double> cache_allocation;  // [K]
  std::string config_fingerprint;
  std::uint64_t train_seed = 0;
  std::uint64_t eval_seed = 0;
};

// Proposed scheme: optimize the cache on the training samples, then design
// the content-delivery beamformers per evaluation realization.
ExperimentReport run_proposed(const ExperimentConfig& cfg,
                              const ChannelSet& channels_train,
                              const ChannelSet& channels_eval);

// Uniform cache split, beamforming per realization.
ExperimentReport run_uniform_baseline(const ExperimentConfig& cfg,
                                      const ChannelSet& channels_eval);

// Single-cluster scheme extended by time division: no inter-cluster
// interference, full power per cluster, rates scaled by 1/G; the cache is
// optimized jointly across all BSs under the shared budget.
ExperimentReport run_timedivision_baseline(const ExperimentConfig& cfg,
                                           const ChannelSet& channels_train,
                                           const ChannelSet& channels_eval);

// Single-cluster scheme applied as-is: optimization pretends there is no
// interference; achieved rates are evaluated with the true interference.
ExperimentReport run_ignore_interference_baseline(
    const ExperimentConfig& cfg, const ChannelSet& channels_train,
    const ChannelSet& channels_eval);

// Deterministic serialization; CSV holds one row per realization, JSON the
// whole report. Refuses to write a report with no realizations.
void emit_report(const ExperimentReport& report, const std::string& path,
                 const std::string& format);
ExperimentReport load_report_json(const std::string& path);

ExperimentConfig experiment_config_from_json(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_to_json(const ExperimentConfig& cfg);

}  // namespace cranopt
