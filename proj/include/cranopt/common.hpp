#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace cranopt {

using cxd = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

// Input violates an operation's contract (bad dimensions, out-of-range values).
struct domain_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A numeric guard tripped (conditioning threshold, non-finite intermediate).
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed file content.
struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Runs fn(i) for i in [0, n). Each index writes only its own output slot, so
// results are identical regardless of thread count; reductions stay with the
// caller in index order.
inline void parallel_for(int n, const std::function<void(int)>& fn) {
  unsigned hw = std::thread::hardware_concurrency();
  int workers = static_cast<int>(hw == 0 ? 1 : hw);
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  if (workers > n) workers = n;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

inline bool approx_equal(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace cranopt
