#pragma once

#include <span>
#include <vector>

namespace safemarl {

inline constexpr double kMinRatio = 1e-8;
inline constexpr double kMaxRatio = 1e8;

/// exp(new - old), clamped to [1e-8, 1e8].
double ratio(double new_logprob, double behavior_logprob);

/// Element-wise ratio_first * advantage: the second-updated agent's advantage source.
std::vector<double> marginal_advantage_second(std::span<const double> advantages,
                                              std::span<const double> ratio_first);

/// mean_i min(r_i A_i, clip(r_i, 1 - eps, 1 + eps) A_i).
double clipped_surrogate(std::span<const double> advantages, std::span<const double> ratios, double clip);

/// mean_i max(r_i A_i, clip(r_i, 1 - eps, 1 + eps) A_i); the pessimistic bound for a cost.
double clipped_cost_surrogate(std::span<const double> advantages, std::span<const double> ratios, double clip);

/// d/dr of one sample's min(rA, clip(r)A) term (before the 1/n of the mean).
double clipped_term_slope(double advantage, double r, double clip);

/// d/dr of one sample's max(rA, clip(r)A) term.
double clipped_cost_term_slope(double advantage, double r, double clip);

}  // namespace safemarl
