#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>

#include "cranopt/common.hpp"

namespace cranopt {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Keyed substream generator: the stream for (seed, key1, key2) is independent
// of the order substreams are consumed, so parallel generation is
// reproducible. Normal variates use an explicit Box-Muller map instead of
// std::normal_distribution, whose algorithm is implementation-defined.
class SubstreamRng {
 public:
  static constexpr const char* kName = "splitmix64/mt19937_64/box-muller-v1";

  SubstreamRng(std::uint64_t seed, std::uint64_t key1, std::uint64_t key2 = 0)
      : engine_(splitmix64(splitmix64(seed ^ 0x5bf0f3c1a8e4d2b7ULL) ^
                           splitmix64(key1)) ^
                splitmix64(key2 + 0x9e3779b97f4a7c15ULL)) {}

  // uniform on (0, 1]
  double uniform01() {
    return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  }

  std::pair<double, double> normal_pair() {
    double u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double phi = 2.0 * M_PI * u2;
    return {r * std::cos(phi), r * std::sin(phi)};
  }

  // circular complex Gaussian with E[|z|^2] = variance
  cxd complex_gaussian(double variance) {
    auto [a, b] = normal_pair();
    double s = std::sqrt(variance / 2.0);
    return {s * a, s * b};
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cranopt
