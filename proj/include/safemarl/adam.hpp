#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace safemarl {

struct AdamConfig {
  double rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::int64_t step = 0;

  static AdamState create(std::size_t n, const AdamConfig& config);
};

/// One bias-corrected adaptive-moment descent step, in place.
void opt_step(std::span<double> params, std::span<const double> grads, AdamState& state);

}  // namespace safemarl
