#include "safemarl/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace safemarl {

double ratio(double new_logprob, double behavior_logprob) {
  return std::clamp(std::exp(new_logprob - behavior_logprob), kMinRatio, kMaxRatio);
}

std::vector<double> marginal_advantage_second(std::span<const double> advantages,
                                              std::span<const double> ratio_first) {
  if (advantages.size() != ratio_first.size()) throw std::invalid_argument("marginal_advantage_second: size mismatch");
  std::vector<double> out(advantages.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ratio_first[i] * advantages[i];
  return out;
}

namespace {

void check(std::span<const double> advantages, std::span<const double> ratios, double clip) {
  if (advantages.size() != ratios.size()) throw std::invalid_argument("clipped surrogate: size mismatch");
  if (advantages.empty()) throw std::invalid_argument("clipped surrogate: empty sample set");
  if (!(clip > 0.0 && clip < 1.0)) throw std::invalid_argument("clipped surrogate: clip must lie in (0, 1)");
}

}  // namespace

double clipped_surrogate(std::span<const double> advantages, std::span<const double> ratios, double clip) {
  check(advantages, ratios, clip);
  double total = 0.0;
  for (std::size_t i = 0; i < advantages.size(); ++i) {
    const double r = ratios[i];
    const double a = advantages[i];
    total += std::min(r * a, std::clamp(r, 1.0 - clip, 1.0 + clip) * a);
  }
  return total / static_cast<double>(advantages.size());
}

double clipped_cost_surrogate(std::span<const double> advantages, std::span<const double> ratios, double clip) {
  check(advantages, ratios, clip);
  double total = 0.0;
  for (std::size_t i = 0; i < advantages.size(); ++i) {
    const double r = ratios[i];
    const double a = advantages[i];
    total += std::max(r * a, std::clamp(r, 1.0 - clip, 1.0 + clip) * a);
  }
  return total / static_cast<double>(advantages.size());
}

double clipped_term_slope(double advantage, double r, double clip) {
  const double clipped = std::clamp(r, 1.0 - clip, 1.0 + clip);
  // Inside the band both branches coincide; outside, the clipped branch is flat.
  if (r * advantage <= clipped * advantage) return advantage;
  return 0.0;
}

double clipped_cost_term_slope(double advantage, double r, double clip) {
  const double clipped = std::clamp(r, 1.0 - clip, 1.0 + clip);
  if (r * advantage >= clipped * advantage) return advantage;
  return 0.0;
}

}  // namespace safemarl
