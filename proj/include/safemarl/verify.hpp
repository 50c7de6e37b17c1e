#pragma once

#include "safemarl/allocator.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace safemarl {

struct CheckResult {
  std::string name;
  double residual = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

struct VerifyOptions {
  std::uint64_t seed = 1009;
  int n_games = 100;
  int gp_windows = 50;
  int ei_points = 20;
  int mc_samples = 1000000;
  int grad_cases = 50;
  // The acquisition under test; replaced by fixtures to check that faults are caught.
  AcquisitionFn acquisition = expected_improvement;
};

/// Tabular decomposition, GP posterior, EI and gradient checks.
std::vector<CheckResult> run_verification(const VerifyOptions& options = {});

void print_checks(std::ostream& out, const std::vector<CheckResult>& checks);

bool all_passed(const std::vector<CheckResult>& checks);

/// Relative error |a - b| / max(|a|, |b|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-5);

}  // namespace safemarl
