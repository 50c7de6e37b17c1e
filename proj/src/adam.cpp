#include "safemarl/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace safemarl {

AdamState AdamState::create(std::size_t n, const AdamConfig& config) {
  AdamState state;
  state.config = config;
  state.first_moment.assign(n, 0.0);
  state.second_moment.assign(n, 0.0);
  return state;
}

void opt_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw std::invalid_argument("opt_step: parameter/gradient/moment shape mismatch");
  }
  const auto& c = state.config;
  ++state.step;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * grads[i];
    v = c.beta2 * v + (1.0 - c.beta2) * grads[i] * grads[i];
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] -= c.rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace safemarl
