#include "cranopt/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cranopt {

using json = nlohmann::json;

namespace {

std::vector<std::pair<double, double>> empirical_cdf(
    const std::vector<double>& rates) {
  std::vector<double> sorted = rates;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::pair<double, double>> cdf;
  cdf.reserve(sorted.size());
  for (size_t i = 0; i < sorted.size(); ++i)
    cdf.emplace_back(sorted[i],
                     static_cast<double>(i + 1) / sorted.size());
  return cdf;
}

void finalize_report(ExperimentReport& rep) {
  rep.cdf = empirical_cdf(rep.rates_bps_hz);
  rep.average_bps_hz =
      std::accumulate(rep.rates_bps_hz.begin(), rep.rates_bps_hz.end(), 0.0) /
      rep.rates_bps_hz.size();
}

std::vector<CMat> realization(const ChannelSet& eval, int e) {
  std::vector<CMat> H(eval.K);
  for (int k = 0; k < eval.K; ++k) H[k] = eval.H[k][e];
  return H;
}

// Per-realization delivery design + achieved sum rate, shared by the schemes
// that differ only in cache vector and optimization model.
std::vector<double> eval_rates(const ExperimentConfig& cfg,
                               const ChannelSet& eval,
                               const std::vector<double>& C,
                               const ModelOptions& opt_model) {
  ProblemConfig p = cfg.problem;
  std::vector<double> rates(eval.T, 0.0);
  parallel_for(eval.T, [&](int e) {
    SolveOptions opts = cfg.solver;
    opts.model = opt_model;
    McmbResult r = solve_mcmb(p, realization(eval, e), C, opts);
    rates[e] = r.rates.sum_rate_bits[0];
  });
  return rates;
}

ProblemConfig single_cluster_config(const ProblemConfig& cfg, int g,
                                    const std::vector<int>& members) {
  ProblemConfig sub = cfg;
  sub.G = 1;
  sub.K = static_cast<int>(members.size());
  sub.cluster_of.assign(sub.K, 0);
  sub.F_g = {cfg.F_g[g]};
  sub.sigma2.clear();
  for (int k : members) sub.sigma2.push_back(cfg.sigma2[k]);
  sub.T = 1;
  return sub;
}

}  // namespace

ExperimentReport run_proposed(const ExperimentConfig& cfg,
                              const ChannelSet& channels_train,
                              const ChannelSet& channels_eval) {
  if (channels_train.K != cfg.problem.K || channels_eval.K != cfg.problem.K ||
      channels_train.M != cfg.problem.M || channels_eval.M != cfg.problem.M ||
      channels_train.N != cfg.problem.N || channels_eval.N != cfg.problem.N)
    throw domain_error("train/eval channel sets incompatible with config");
  ExperimentReport rep;
  rep.scheme = "proposed";
  rep.config_fingerprint = config_fingerprint(cfg.problem);
  rep.train_seed = channels_train.seed;
  rep.eval_seed = channels_eval.seed;

  CacheSolution cache = solve_cache_allocation(cfg.problem, channels_train,
                                               cfg.solver);
  rep.cache_allocation = cache.primal.C;
  rep.rates_bps_hz = eval_rates(cfg, channels_eval, cache.primal.C, {});
  finalize_report(rep);
  return rep;
}

ExperimentReport run_uniform_baseline(const ExperimentConfig& cfg,
                                      const ChannelSet& channels_eval) {
  ExperimentReport rep;
  rep.scheme = "uniform";
  rep.config_fingerprint = config_fingerprint(cfg.problem);
  rep.eval_seed = channels_eval.seed;
  rep.cache_allocation.assign(cfg.problem.K,
                              cfg.problem.C_tot / cfg.problem.K);
  rep.rates_bps_hz = eval_rates(cfg, channels_eval, rep.cache_allocation, {});
  finalize_report(rep);
  return rep;
}

ExperimentReport run_timedivision_baseline(const ExperimentConfig& cfg,
                                           const ChannelSet& channels_train,
                                           const ChannelSet& channels_eval) {
  ExperimentReport rep;
  rep.scheme = "timedivision";
  rep.config_fingerprint = config_fingerprint(cfg.problem);
  rep.train_seed = channels_train.seed;
  rep.eval_seed = channels_eval.seed;

  // cache optimized for the time-division model: interference-free rates at
  // full per-cluster power (the common 1/G factor does not move the argmax)
  SolveOptions train_opts = cfg.solver;
  train_opts.model.interference = false;
  train_opts.model.per_cluster_power = true;
  CacheSolution cache =
      solve_cache_allocation(cfg.problem, channels_train, train_opts);
  rep.cache_allocation = cache.primal.C;

  // evaluation: each cluster gets 1/G of the time at full power, no
  // interference exists in its slot
  const ProblemConfig& p = cfg.problem;
  auto clusters = p.clusters();
  rep.rates_bps_hz.assign(channels_eval.T, 0.0);
  for (int e = 0; e < channels_eval.T; ++e) {
    double total_bits = 0.0;
    for (int g = 0; g < p.G; ++g) {
      ProblemConfig sub = single_cluster_config(p, g, clusters[g]);
      std::vector<CMat> Hsub;
      std::vector<double> Csub;
      for (int k : clusters[g]) {
        Hsub.push_back(channels_eval.H[k][e]);
        Csub.push_back(cache.primal.C[k]);
      }
      McmbResult r = solve_mcmb(sub, Hsub, Csub, cfg.solver);
      total_bits += r.rates.sum_rate_bits[0];
    }
    rep.rates_bps_hz[e] = total_bits / p.G;
  }
  finalize_report(rep);
  return rep;
}

ExperimentReport run_ignore_interference_baseline(
    const ExperimentConfig& cfg, const ChannelSet& channels_train,
    const ChannelSet& channels_eval) {
  ExperimentReport rep;
  rep.scheme = "ignore_interference";
  rep.config_fingerprint = config_fingerprint(cfg.problem);
  rep.train_seed = channels_train.seed;
  rep.eval_seed = channels_eval.seed;

  SolveOptions train_opts = cfg.solver;
  train_opts.model.interference = false;
  CacheSolution cache =
      solve_cache_allocation(cfg.problem, channels_train, train_opts);
  rep.cache_allocation = cache.primal.C;

  // beams designed ignoring interference, rates achieved with it
  ModelOptions no_intf;
  no_intf.interference = false;
  rep.rates_bps_hz = eval_rates(cfg, channels_eval, cache.primal.C, no_intf);
  finalize_report(rep);
  return rep;
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

json report_to_json(const ExperimentReport& r) {
  json cdf = json::array();
  for (const auto& [rate, p] : r.cdf) cdf.push_back({rate, p});
  return json{{"scheme", r.scheme},
              {"rates_bps_hz", r.rates_bps_hz},
              {"cdf", cdf},
              {"average_bps_hz", r.average_bps_hz},
              {"cache_allocation", r.cache_allocation},
              {"config_fingerprint", r.config_fingerprint},
              {"train_seed", r.train_seed},
              {"eval_seed", r.eval_seed}};
}

}  // namespace

void emit_report(const ExperimentReport& report, const std::string& path,
                 const std::string& format) {
  if (report.rates_bps_hz.empty())
    throw domain_error("refusing to write a report with no realizations");
  if (format == "json") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << report_to_json(report).dump(2) << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
  } else if (format == "csv") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    // cdf_probability is the empirical CDF evaluated at the row's rate
    std::vector<double> sorted = report.rates_bps_hz;
    std::sort(sorted.begin(), sorted.end());
    out << "realization,sum_rate_bps_hz,cdf_probability\n";
    for (size_t i = 0; i < report.rates_bps_hz.size(); ++i) {
      double rate = report.rates_bps_hz[i];
      auto it = std::upper_bound(sorted.begin(), sorted.end(), rate);
      double p = static_cast<double>(it - sorted.begin()) / sorted.size();
      out << i << ',' << fmt_double(rate) << ',' << fmt_double(p) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
  } else {
    throw domain_error("unknown report format: " + format);
  }
}

ExperimentReport load_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open report: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw parse_error(std::string("report JSON: ") + e.what());
  }
  ExperimentReport r;
  try {
    j.at("scheme").get_to(r.scheme);
    j.at("rates_bps_hz").get_to(r.rates_bps_hz);
    for (const auto& row : j.at("cdf"))
      r.cdf.emplace_back(row.at(0).get<double>(), row.at(1).get<double>());
    j.at("average_bps_hz").get_to(r.average_bps_hz);
    j.at("cache_allocation").get_to(r.cache_allocation);
    j.at("config_fingerprint").get_to(r.config_fingerprint);
    j.at("train_seed").get_to(r.train_seed);
    j.at("eval_seed").get_to(r.eval_seed);
  } catch (const json::exception& e) {
    throw parse_error(std::string("report JSON: ") + e.what());
  }
  return r;
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw parse_error(std::string("experiment config JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  cfg.noise_psd_dbm_per_hz =
      j.value("noise_psd_dbm_per_hz", cfg.noise_psd_dbm_per_hz);
  cfg.bandwidth_hz = j.value("bandwidth_hz", cfg.bandwidth_hz);
  if (!j.contains("sigma2"))
    j["sigma2"] = noise_power(cfg.noise_psd_dbm_per_hz, cfg.bandwidth_hz);
  cfg.problem = problem_config_from_json(j.dump());
  try {
    if (j.contains("distances_m")) j.at("distances_m").get_to(cfg.distances_m);
    cfg.antenna_gain_db = j.value("antenna_gain_db", cfg.antenna_gain_db);
    cfg.eval_realizations = j.value("eval_realizations", cfg.eval_realizations);
    cfg.eval_seed = j.value("eval_seed", cfg.eval_seed);
    if (j.contains("baselines")) j.at("baselines").get_to(cfg.baselines);
    if (j.contains("catalog")) {
      FileCatalog cat;
      j.at("catalog").at("sizes").get_to(cat.sizes);
      j.at("catalog").at("popularities").get_to(cat.pops);
      cfg.catalog = cat;
    }
    if (j.contains("solver")) {
      const auto& s = j.at("solver");
      std::string mode = s.value("mode", std::string("accelerated"));
      if (mode == "plain")
        cfg.solver.mode = SolverMode::plain;
      else if (mode == "accelerated")
        cfg.solver.mode = SolverMode::accelerated;
      else
        throw parse_error("solver mode must be plain or accelerated");
      cfg.solver.max_outer = s.value("max_outer", cfg.solver.max_outer);
      cfg.solver.max_inner = s.value("max_inner", cfg.solver.max_inner);
      cfg.solver.adaptive_restart =
          s.value("adaptive_restart", cfg.solver.adaptive_restart);
    }
  } catch (const json::exception& e) {
    throw parse_error(std::string("experiment config JSON: ") + e.what());
  }
  if (static_cast<int>(cfg.distances_m.size()) != cfg.problem.K &&
      !cfg.distances_m.empty())
    throw parse_error("distances_m must have K entries");
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return experiment_config_from_json(ss.str());
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  json j = json::parse(problem_config_to_json(cfg.problem));
  j["distances_m"] = cfg.distances_m;
  j["antenna_gain_db"] = cfg.antenna_gain_db;
  j["noise_psd_dbm_per_hz"] = cfg.noise_psd_dbm_per_hz;
  j["bandwidth_hz"] = cfg.bandwidth_hz;
  j["eval_realizations"] = cfg.eval_realizations;
  j["eval_seed"] = cfg.eval_seed;
  j["baselines"] = cfg.baselines;
  if (cfg.catalog)
    j["catalog"] = {{"sizes", cfg.catalog->sizes},
                    {"popularities", cfg.catalog->pops}};
  return j.dump(2);
}

}  // namespace cranopt
