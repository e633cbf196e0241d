#include "cranopt/channels.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string_view>

#include <nlohmann/json.hpp>

#include "cranopt/rng.hpp"

namespace cranopt {

using json = nlohmann::json;

double path_loss_db(double distance_m) {
  if (!(distance_m > 0)) throw domain_error("distance must be positive");
  return 128.1 + 37.6 * std::log10(distance_m / 1000.0);
}

double noise_power(double psd_dbm_per_hz, double bandwidth_hz) {
  if (!(bandwidth_hz > 0)) throw domain_error("bandwidth must be positive");
  double dbm = psd_dbm_per_hz + 10.0 * std::log10(bandwidth_hz);
  return std::pow(10.0, (dbm - 30.0) / 10.0);
}

ChannelSet sample_channels(const ProblemConfig& cfg,
                           const std::vector<double>& distances_m,
                           double antenna_gain_db, std::uint64_t seed) {
  if (static_cast<int>(distances_m.size()) != cfg.K)
    throw domain_error("distances must have K entries");
  ChannelSet set;
  set.K = cfg.K;
  set.G = cfg.G;
  set.M = cfg.M;
  set.N = cfg.N;
  set.T = cfg.T;
  set.seed = seed;
  set.generator = SubstreamRng::kName;
  set.distances_m = distances_m;
  set.antenna_gain_db = antenna_gain_db;
  set.config_fingerprint = config_fingerprint(cfg);
  set.pathloss_db.resize(cfg.K);
  for (int k = 0; k < cfg.K; ++k)
    set.pathloss_db[k] = path_loss_db(distances_m[k]);
  set.H.assign(cfg.K, std::vector<CMat>(cfg.T));
  parallel_for(cfg.K * cfg.T, [&](int idx) {
    int k = idx / cfg.T;
    int t = idx % cfg.T;
    double var = linear_gain(antenna_gain_db, set.pathloss_db[k]);
    SubstreamRng rng(seed, static_cast<std::uint64_t>(k),
                     static_cast<std::uint64_t>(t));
    CMat Hkt(cfg.N, cfg.M);
    for (int r = 0; r < cfg.N; ++r)
      for (int c = 0; c < cfg.M; ++c) Hkt(r, c) = rng.complex_gaussian(var);
    set.H[k][t] = std::move(Hkt);
  });
  return set;
}

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

double parse_double(std::string_view s, const char* what, long line) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw parse_error("channel file line " + std::to_string(line) +
                      ": bad " + std::string(what) + " value '" +
                      std::string(s) + "'");
  return v;
}

long parse_long(std::string_view s, const char* what, long line) {
  long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw parse_error("channel file line " + std::to_string(line) +
                      ": bad " + std::string(what) + " value '" +
                      std::string(s) + "'");
  return v;
}

constexpr int kFormatVersion = 1;
constexpr const char* kCsvHeader = "t,k,row,col,re,im";

}  // namespace

void save_channels(const ChannelSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  json meta{{"format_version", kFormatVersion},
            {"K", set.K},
            {"G", set.G},
            {"M", set.M},
            {"N", set.N},
            {"T", set.T},
            {"seed", set.seed},
            {"generator", set.generator},
            {"distances_m", set.distances_m},
            {"pathloss_db", set.pathloss_db},
            {"antenna_gain_db", set.antenna_gain_db},
            {"config_fingerprint", set.config_fingerprint}};
  out << meta.dump() << "\n" << kCsvHeader << "\n";
  std::string row;
  for (int t = 0; t < set.T; ++t)
    for (int k = 0; k < set.K; ++k)
      for (int r = 0; r < set.N; ++r)
        for (int c = 0; c < set.M; ++c) {
          row.clear();
          row += std::to_string(t);
          row += ',';
          row += std::to_string(k);
          row += ',';
          row += std::to_string(r);
          row += ',';
          row += std::to_string(c);
          row += ',';
          append_double(row, set.H[k][t](r, c).real());
          row += ',';
          append_double(row, set.H[k][t](r, c).imag());
          row += '\n';
          out << row;
        }
  if (!out) throw std::runtime_error("write failed: " + path);
}

ChannelSet load_channels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error("cannot open channel file: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw parse_error("channel file is empty: " + path);
  json meta;
  try {
    meta = json::parse(line);
  } catch (const json::parse_error& e) {
    throw parse_error("channel file metadata: " + std::string(e.what()));
  }
  ChannelSet set;
  try {
    if (meta.at("format_version").get<int>() != kFormatVersion)
      throw parse_error("unsupported channel file format version");
    meta.at("K").get_to(set.K);
    meta.at("G").get_to(set.G);
    meta.at("M").get_to(set.M);
    meta.at("N").get_to(set.N);
    meta.at("T").get_to(set.T);
    meta.at("seed").get_to(set.seed);
    meta.at("generator").get_to(set.generator);
    meta.at("distances_m").get_to(set.distances_m);
    meta.at("pathloss_db").get_to(set.pathloss_db);
    meta.at("antenna_gain_db").get_to(set.antenna_gain_db);
    meta.at("config_fingerprint").get_to(set.config_fingerprint);
  } catch (const json::exception& e) {
    throw parse_error("channel file metadata: " + std::string(e.what()));
  }
  if (set.K < 1 || set.T < 1 || set.N < 1 || set.M < 1)
    throw parse_error("channel file metadata: non-positive dimensions");
  if (static_cast<int>(set.distances_m.size()) != set.K ||
      static_cast<int>(set.pathloss_db.size()) != set.K)
    throw parse_error(
        "channel file metadata: distances/pathloss length differs from K");
  if (!std::getline(in, line) || line != kCsvHeader)
    throw parse_error("channel file: missing CSV header line");

  set.H.assign(set.K, std::vector<CMat>(set.T, CMat::Zero(set.N, set.M)));
  std::vector<char> seen(static_cast<size_t>(set.K) * set.T * set.N * set.M,
                         0);
  long lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string_view sv(line);
    std::array<std::string_view, 6> field;
    for (int i = 0; i < 6; ++i) {
      size_t pos = (i < 5) ? sv.find(',') : std::string_view::npos;
      if (i < 5 && pos == std::string_view::npos)
        throw parse_error("channel file line " + std::to_string(lineno) +
                          ": expected 6 comma-separated fields");
      field[i] = sv.substr(0, pos);
      if (i < 5) sv.remove_prefix(pos + 1);
    }
    long t = parse_long(field[0], "t", lineno);
    long k = parse_long(field[1], "k", lineno);
    long r = parse_long(field[2], "row", lineno);
    long c = parse_long(field[3], "col", lineno);
    if (t < 0 || t >= set.T || k < 0 || k >= set.K || r < 0 || r >= set.N ||
        c < 0 || c >= set.M)
      throw parse_error("channel file line " + std::to_string(lineno) +
                        ": index out of range");
    double re = parse_double(field[4], "re", lineno);
    double im = parse_double(field[5], "im", lineno);
    set.H[k][t](r, c) = cxd(re, im);
    seen[((static_cast<size_t>(t) * set.K + k) * set.N + r) * set.M + c] = 1;
  }
  for (size_t i = 0; i < seen.size(); ++i)
    if (!seen[i])
      throw parse_error("channel file truncated: " +
                        std::to_string(seen.size() - i) +
                        " entries missing (first at flat index " +
                        std::to_string(i) + ")");
  return set;
}

}  // namespace cranopt
