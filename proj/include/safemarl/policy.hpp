#pragma once

#include "safemarl/mlp.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace safemarl {

inline constexpr double kMinLogStd = -5.0;
inline constexpr double kMaxLogStd = 2.0;

/// State-dependent mean from an MLP trunk, state-independent learnable log std.
/// `params` holds the trunk parameters followed by one log std per action dimension.
struct GaussianPolicy {
  MlpShape trunk;
  std::vector<double> params;

  static GaussianPolicy create(int obs_dim, int hidden, int act_dim, double init_log_std, std::uint64_t seed);

  int action_dim() const { return trunk.output_dim(); }
  std::span<const double> trunk_params() const { return {params.data(), trunk.param_count()}; }
  std::span<const double> log_std() const {
    return {params.data() + trunk.param_count(), static_cast<std::size_t>(action_dim())};
  }
  void clamp_log_std();
};

struct GaussianBatch {
  Eigen::MatrixXd mean;  // act_dim x batch
  Eigen::VectorXd std;   // act_dim
};

GaussianBatch forward_policy(const GaussianPolicy& policy, const Eigen::MatrixXd& obs, MlpTape* tape = nullptr);

struct GaussianSingle {
  std::vector<double> mean;
  std::vector<double> std;
};

GaussianSingle forward_policy(const GaussianPolicy& policy, std::span<const double> obs);

double log_prob(std::span<const double> mean, std::span<const double> std, std::span<const double> action);

/// KL(N(mean1, std1) || N(mean2, std2)) for diagonal Gaussians.
double kl_diag_gaussian(std::span<const double> mean1, std::span<const double> std1, std::span<const double> mean2,
                        std::span<const double> std2);

/// Scalar-output value network.
struct Critic {
  MlpShape shape;
  std::vector<double> params;

  static Critic create(int input_dim, int hidden, std::uint64_t seed);
};

struct CriticPair {
  Critic reward;
  Critic cost;
};

Eigen::VectorXd forward_critic(const Critic& critic, const Eigen::MatrixXd& input, MlpTape* tape = nullptr);

/// Samples for one agent's clipped Lagrangian update.
struct PolicySamples {
  Eigen::MatrixXd obs;            // obs_dim x n
  Eigen::MatrixXd actions;        // act_dim x n
  Eigen::VectorXd behavior_logp;  // n
  Eigen::VectorXd adv_reward;     // n
  Eigen::VectorXd adv_cost;       // n
  // Optional per-sample multipliers; when set they replace the scalar lambda.
  Eigen::VectorXd lambda;
};

struct LossAndGrad {
  double loss = 0.0;
  double reward_surrogate = 0.0;
  double cost_surrogate = 0.0;
  std::vector<double> grad;
};

/// Minimisation form of the Lagrangian objective
///   -[S_R - lambda * S_C] / (1 + lambda)
/// with S_R the pessimistic clipped surrogate of the reward advantages and S_C
/// the pessimistic (upper) clipped surrogate of the cost advantages.
LossAndGrad lagrangian_policy_loss(const GaussianPolicy& policy, const PolicySamples& samples, double lambda,
                                   double clip);

/// Mean squared error against `targets`, with gradient.
LossAndGrad critic_loss(const Critic& critic, const Eigen::MatrixXd& input, const Eigen::VectorXd& targets);

}  // namespace safemarl
