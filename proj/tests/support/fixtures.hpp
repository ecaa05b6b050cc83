#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "spoc/config.hpp"
#include "spoc/fem.hpp"
#include "spoc/field.hpp"
#include "spoc/model.hpp"

namespace spoc::testing {

/// Heat-benchmark coefficients on a smaller grid, for tests that need many
/// solves. Every physical parameter keeps its benchmark value unless passed.
inline Problem small_heat(std::size_t elements = 40, double T = 0.2, double dt = 0.01) {
  RunConfig cfg = preset_config("heat_benchmark");
  cfg.n_elems = elements;
  cfg.N_W = std::min<std::size_t>(cfg.N_W, elements - 1);
  cfg.T = T;
  cfg.dt = dt;
  cfg.branch_interval = dt;
  validate(cfg);
  return make_problem(cfg);
}

/// The same problem with every noise and observation coupling removed.
inline Problem deterministic_heat(std::size_t elements = 40, double T = 0.2, double dt = 0.01) {
  RunConfig cfg = preset_config("heat_benchmark");
  cfg.n_elems = elements;
  cfg.N_W = std::min<std::size_t>(cfg.N_W, elements - 1);
  cfg.T = T;
  cfg.dt = dt;
  cfg.branch_interval = dt;
  cfg.sigma_amplitude = 0.0;
  cfg.g_amplitude = 0.0;
  cfg.observation_gain = 0.0;
  validate(cfg);
  return make_problem(cfg);
}

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double stderr_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const double mx = mean_of(lx), my = mean_of(ly);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxy / sxx;
}

/// Regression lock against tests/golden/<name>.txt (one value per line).
/// With SPOC_UPDATE_GOLDEN set in the environment the file is rewritten
/// instead, so a deliberate numerical change is one command away.
inline void expect_golden(const std::string& name, const std::vector<double>& values, double rel_tol = 1e-10) {
  const std::filesystem::path path = std::filesystem::path(SPOC_GOLDEN_DIR) / (name + ".txt");
  if (std::getenv("SPOC_UPDATE_GOLDEN")) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    out.precision(17);
    for (double v : values) out << v << '\n';
    GTEST_SKIP() << "golden file rewritten: " << path;
  }
  std::ifstream in(path);
  ASSERT_TRUE(in) << "missing golden file " << path << " (run with SPOC_UPDATE_GOLDEN=1 once)";
  std::vector<double> expected;
  for (double v; in >> v;) expected.push_back(v);
  ASSERT_EQ(expected.size(), values.size()) << path;
  double scale = 0.0;
  for (double v : expected) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < values.size(); ++i) {
    EXPECT_NEAR(values[i], expected[i], rel_tol * std::max(scale, 1e-300)) << name << "[" << i << "]";
  }
}

inline std::vector<double> as_vector(const Field& f) { return {f.values().begin(), f.values().end()}; }

}  // namespace spoc::testing
