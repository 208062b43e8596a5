#pragma once

#include <filesystem>
#include <string>

#include "collapsar/ode_engine.hpp"
#include "collapsar/selfsim.hpp"
#include "collapsar/types.hpp"

namespace testing_support {

using namespace collapsar;

inline PhysicalInit figure1_init(double eps = 0.01) { return {-4.0, -5.0, 5.0, eps}; }

inline SolutionTrace figure1_trace(int A = 0, double y_end = 10.0) {
  IntegratorConfig cfg;
  cfg.y_end = y_end;
  return integrate(map_initial(figure1_init()), PressureFlag(A), cfg);
}

inline SolutionTrace exact_trace(double y0 = 0.1, double y_end = 10.0) {
  IntegratorConfig cfg;
  cfg.y_end = y_end;
  return integrate({y0, -1.0, 0.0, 2.0 / (y0 * y0)}, PressureFlag(1), cfg);
}

/// Hand-built trace from explicit samples, no integration.
inline SolutionTrace synthetic(std::vector<SimilarityState> samples, int A = 0) {
  SolutionTrace t;
  t.samples = std::move(samples);
  t.pressure = PressureFlag(A);
  return t;
}

inline std::filesystem::path source_dir() { return COLLAPSAR_SOURCE_DIR; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("collapsar_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing_support
