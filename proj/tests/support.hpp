#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "edgeyolo/rng.hpp"
#include "edgeyolo/tensor.hpp"

namespace testing {

inline std::filesystem::path data_dir() {
  if (const char* d = std::getenv("EDGEYOLO_DATA_DIR")) {
    return d;
  }
  return std::filesystem::path(__FILE__).parent_path().parent_path();
}

template <class T>
edgeyolo::Tensor<T> random_tensor(edgeyolo::Rng& rng, edgeyolo::Shape s,
                                  double lo = -1.0, double hi = 1.0) {
  edgeyolo::Tensor<T> t(s);
  for (T& v : t.values()) {
    v = static_cast<T>(rng.uniform(lo, hi));
  }
  return t;
}

/// Relative error with an absolute floor, so near-zero gradients compare on
/// an absolute scale.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central-difference derivative of f with respect to x[i].
inline double numeric_grad(std::vector<double>& x, std::size_t i,
                           const std::function<double()>& f, double h = 1e-4) {
  const double keep = x[i];
  x[i] = keep + h;
  const double up = f();
  x[i] = keep - h;
  const double down = f();
  x[i] = keep;
  return (up - down) / (2 * h);
}

/// Checks analytic[i] against central differences at every index (or a
/// strided subset when `stride` > 1). Returns the worst relative error.
inline double max_grad_error(std::vector<double>& x,
                             const std::vector<double>& analytic,
                             const std::function<double()>& f,
                             std::size_t stride = 1, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); i += stride) {
    worst = std::max(worst, rel_err(analytic[i], numeric_grad(x, i, f), floor));
  }
  return worst;
}

/// Fixed random projection used to turn tensor outputs into a scalar loss.
inline std::vector<double> projection(std::size_t n, std::uint64_t seed) {
  edgeyolo::Rng rng(seed);
  std::vector<double> w(n);
  for (double& v : w) {
    v = rng.uniform(-1.0, 1.0);
  }
  return w;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i] * b[i];
  }
  return s;
}

}  // namespace testing
