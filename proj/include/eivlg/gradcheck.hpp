#pragma once

// Finite-difference checks of every hand-derived gradient in the library on
// small random instances. Shared by `eivlg gradcheck` and the test suites.

#include <cstdint>
#include <string>
#include <vector>

#include "eivlg/numerics.hpp"

namespace eivlg {

struct GradCheckEntry {
  std::string name;
  std::uint64_t seed = 0;
  GradCheckResult result;
};

struct GradSuiteReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t tiny = 0;              // coordinates scored by absolute error
  double max_tiny_abs_error = 0.0;
};

struct GradSuiteOptions {
  int seeds = 10;
  std::uint64_t base_seed = 1;
  double h = 1e-5;
  /// Gradients smaller than this are judged by absolute error: with losses of
  /// order one, (f(x+h)-f(x-h))/2h carries roundoff near 1e-10.
  double tiny = 1e-6;
  /// Flips the sign of one analytic gradient entry; the suite must catch it.
  bool inject_fault = false;
};

GradSuiteReport RunGradSuite(const GradSuiteOptions& options);

}  // namespace eivlg
