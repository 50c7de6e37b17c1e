#include "safemarl/policy.hpp"

#include "safemarl/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace safemarl {

GaussianPolicy GaussianPolicy::create(int obs_dim, int hidden, int act_dim, double init_log_std, std::uint64_t seed) {
  GaussianPolicy policy;
  policy.trunk.sizes = {obs_dim, hidden, hidden, act_dim};
  policy.params = mlp_init(policy.trunk, seed, 0.01);
  policy.params.resize(policy.trunk.param_count() + act_dim, std::clamp(init_log_std, kMinLogStd, kMaxLogStd));
  return policy;
}

void GaussianPolicy::clamp_log_std() {
  for (std::size_t k = trunk.param_count(); k < params.size(); ++k) {
    params[k] = std::clamp(params[k], kMinLogStd, kMaxLogStd);
  }
}

GaussianBatch forward_policy(const GaussianPolicy& policy, const Eigen::MatrixXd& obs, MlpTape* tape) {
  GaussianBatch out;
  out.mean = mlp_forward(policy.trunk, policy.trunk_params(), obs, tape);
  const auto log_std = policy.log_std();
  out.std.resize(static_cast<Eigen::Index>(log_std.size()));
  for (std::size_t k = 0; k < log_std.size(); ++k) {
    out.std(static_cast<Eigen::Index>(k)) = std::exp(std::clamp(log_std[k], kMinLogStd, kMaxLogStd));
  }
  return out;
}

GaussianSingle forward_policy(const GaussianPolicy& policy, std::span<const double> obs) {
  const Eigen::MatrixXd input = Eigen::Map<const Eigen::VectorXd>(obs.data(), static_cast<Eigen::Index>(obs.size()));
  const auto batch = forward_policy(policy, input);
  GaussianSingle out;
  out.mean.assign(batch.mean.data(), batch.mean.data() + batch.mean.size());
  out.std.assign(batch.std.data(), batch.std.data() + batch.std.size());
  return out;
}

double log_prob(std::span<const double> mean, std::span<const double> std, std::span<const double> action) {
  if (mean.size() != std.size() || mean.size() != action.size()) throw std::invalid_argument("log_prob: size mismatch");
  constexpr double half_log_two_pi = 0.91893853320467274178;
  double total = 0.0;
  for (std::size_t k = 0; k < mean.size(); ++k) {
    if (!(std[k] > 0.0)) throw std::invalid_argument("log_prob: std must be > 0");
    const double z = (action[k] - mean[k]) / std[k];
    total += -0.5 * z * z - std::log(std[k]) - half_log_two_pi;
  }
  return total;
}

double kl_diag_gaussian(std::span<const double> mean1, std::span<const double> std1, std::span<const double> mean2,
                        std::span<const double> std2) {
  const std::size_t n = mean1.size();
  if (std1.size() != n || mean2.size() != n || std2.size() != n) throw std::invalid_argument("kl: size mismatch");
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!(std1[k] > 0.0 && std2[k] > 0.0)) throw std::invalid_argument("kl: std must be > 0");
    const double var1 = std1[k] * std1[k];
    const double var2 = std2[k] * std2[k];
    const double dm = mean1[k] - mean2[k];
    total += std::log(std2[k] / std1[k]) + (var1 + dm * dm) / (2.0 * var2) - 0.5;
  }
  return std::max(total, 0.0);
}

Critic Critic::create(int input_dim, int hidden, std::uint64_t seed) {
  Critic critic;
  critic.shape.sizes = {input_dim, hidden, hidden, 1};
  critic.params = mlp_init(critic.shape, seed, 1.0);
  return critic;
}

Eigen::VectorXd forward_critic(const Critic& critic, const Eigen::MatrixXd& input, MlpTape* tape) {
  return mlp_forward(critic.shape, critic.params, input, tape).row(0).transpose();
}

LossAndGrad lagrangian_policy_loss(const GaussianPolicy& policy, const PolicySamples& samples, double lambda,
                                   double clip) {
  const Eigen::Index n = samples.obs.cols();
  if (n == 0) throw std::invalid_argument("policy loss: empty sample set");
  if (samples.actions.cols() != n || samples.behavior_logp.size() != n || samples.adv_reward.size() != n ||
      samples.adv_cost.size() != n) {
    throw std::invalid_argument("policy loss: sample arrays disagree in length");
  }
  if (lambda < 0.0) throw std::invalid_argument("policy loss: lambda must be >= 0");
  const bool per_sample = samples.lambda.size() > 0;
  if (per_sample && (samples.lambda.size() != n || samples.lambda.minCoeff() < 0.0)) {
    throw std::invalid_argument("policy loss: per-sample lambda must match the samples and be >= 0");
  }

  MlpTape tape;
  const GaussianBatch dist = forward_policy(policy, samples.obs, &tape);
  const int act_dim = policy.action_dim();
  const Eigen::VectorXd log_std = dist.std.array().log();
  const double inv_n = 1.0 / static_cast<double>(n);

  Eigen::MatrixXd grad_mean(act_dim, n);
  Eigen::VectorXd grad_log_std = Eigen::VectorXd::Zero(act_dim);
  double s_reward = 0.0;
  double s_cost = 0.0;
  double loss = 0.0;
  constexpr double half_log_two_pi = 0.91893853320467274178;
  for (Eigen::Index i = 0; i < n; ++i) {
    double logp = 0.0;
    for (int k = 0; k < act_dim; ++k) {
      const double z = (samples.actions(k, i) - dist.mean(k, i)) / dist.std(k);
      logp += -0.5 * z * z - log_std(k) - half_log_two_pi;
    }
    const double r_raw = std::exp(logp - samples.behavior_logp(i));
    const double r = std::clamp(r_raw, kMinRatio, kMaxRatio);
    const double a_r = samples.adv_reward(i);
    const double a_c = samples.adv_cost(i);
    const double clipped = std::clamp(r, 1.0 - clip, 1.0 + clip);
    const double term_r = std::min(r * a_r, clipped * a_r);
    const double term_c = std::max(r * a_c, clipped * a_c);
    s_reward += term_r;
    s_cost += term_c;
    const double lam = per_sample ? samples.lambda(i) : lambda;
    const double scale = 1.0 / (1.0 + lam);
    loss -= scale * (term_r - lam * term_c);

    double slope = clipped_term_slope(a_r, r, clip) - lam * clipped_cost_term_slope(a_c, r, clip);
    if (r != r_raw) slope = 0.0;
    // loss = -scale * mean(...); dloss/dlogp = -scale/n * slope * r
    const double dlogp = -scale * inv_n * slope * r;
    for (int k = 0; k < act_dim; ++k) {
      const double sd = dist.std(k);
      const double diff = samples.actions(k, i) - dist.mean(k, i);
      grad_mean(k, i) = dlogp * diff / (sd * sd);
      grad_log_std(k) += dlogp * (diff * diff / (sd * sd) - 1.0);
    }
  }
  s_reward *= inv_n;
  s_cost *= inv_n;

  LossAndGrad out;
  out.reward_surrogate = s_reward;
  out.cost_surrogate = s_cost;
  out.loss = loss * inv_n;
  out.grad.assign(policy.params.size(), 0.0);
  mlp_backward(policy.trunk, policy.trunk_params(), tape, grad_mean,
               std::span<double>(out.grad.data(), policy.trunk.param_count()));
  const auto raw_log_std = policy.log_std();
  for (int k = 0; k < act_dim; ++k) {
    // The clamp is flat outside [kMinLogStd, kMaxLogStd]; stored values sit inside it.
    const double v = raw_log_std[k];
    if (v >= kMinLogStd && v <= kMaxLogStd) out.grad[policy.trunk.param_count() + k] = grad_log_std(k);
  }
  return out;
}

LossAndGrad critic_loss(const Critic& critic, const Eigen::MatrixXd& input, const Eigen::VectorXd& targets) {
  const Eigen::Index n = input.cols();
  if (n == 0 || targets.size() != n) throw std::invalid_argument("critic loss: bad batch");
  MlpTape tape;
  const Eigen::VectorXd values = forward_critic(critic, input, &tape);
  const Eigen::VectorXd err = values - targets;
  LossAndGrad out;
  out.loss = err.squaredNorm() / static_cast<double>(n);
  out.grad.assign(critic.params.size(), 0.0);
  const Eigen::MatrixXd grad_out = (2.0 / static_cast<double>(n)) * err.transpose();
  mlp_backward(critic.shape, critic.params, tape, grad_out, out.grad);
  return out;
}

}  // namespace safemarl
