#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dipp/mlp.hpp"
#include "dipp/rng.hpp"
#include "dipp/tensor.hpp"

namespace testing {

inline dipp::Tensor random_tensor(std::size_t rows, std::size_t cols, dipp::Rng& rng, double scale = 1.0) {
  dipp::Tensor t({rows, cols});
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Central difference of a scalar function of a flat vector, entry by entry.
inline std::vector<double> central_difference(std::vector<double> x,
                                              const std::function<double(const std::vector<double>&)>& f,
                                              double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Fresh scratch directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dipp_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace testing
