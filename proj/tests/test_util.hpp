#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "ccfg/random.hpp"
#include "ccfg/tensor.hpp"

namespace testutil {

inline ccfg::Tensor random_tensor(int n, int c, int h, int w, std::uint64_t seed, double scale = 1.0) {
  ccfg::Engine rng(seed);
  ccfg::Tensor t(n, c, h, w);
  for (double& v : t.data) v = scale * ccfg::standard_normal(rng);
  return t;
}

inline double rel_err(double a, double b) {
  const double d = std::max(std::abs(a), std::abs(b));
  return d == 0.0 ? 0.0 : std::abs(a - b) / d;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ccfg_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testutil
