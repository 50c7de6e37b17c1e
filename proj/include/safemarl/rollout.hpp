#pragma once

#include "safemarl/policy.hpp"
#include "safemarl/transport_env.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

namespace safemarl {

struct AgentSamples {
  Eigen::MatrixXd obs;      // kObsDim x n
  Eigen::MatrixXd actions;  // kActDim x n, as sampled (before clamping)
  Eigen::MatrixXd means;    // behaviour means
  Eigen::VectorXd log_std;  // behaviour log std, one per action dimension
  Eigen::VectorXd logp;     // behaviour log-probabilities
};

/// On-policy transitions stored env-major: sample (e, t) sits at e * horizon + t.
struct RolloutBatch {
  int n_envs = 0;
  int horizon = 0;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  std::array<AgentSamples, kNumAgents> agents;
  Eigen::VectorXd reward;
  Eigen::VectorXd cost;
  Eigen::VectorXd value_reward;
  Eigen::VectorXd value_cost;
  // Critic estimates of the successor state; only read when the step does not
  // end in arrival.
  Eigen::VectorXd next_value_reward;
  Eigen::VectorXd next_value_cost;
  std::vector<std::uint8_t> terminal;     // arrival: no bootstrapping
  std::vector<std::uint8_t> episode_end;  // arrival or timeout
  std::vector<int> episode_step;          // step index within the episode before the transition
  std::vector<std::uint8_t> collided;

  Eigen::Index size() const { return static_cast<Eigen::Index>(n_envs) * horizon; }
  Eigen::Index index(int env, int t) const { return static_cast<Eigen::Index>(env) * horizon + t; }

  /// Both agents' observations stacked (2 * kObsDim x n): the critics' input.
  Eigen::MatrixXd critic_input() const;

  void validate() const;
};

/// Stacks both observations into one critic input column.
Eigen::VectorXd critic_features(const ObservationPair& obs);

/// Vectorised environment runner with persistent per-env state.
class RolloutCollector {
 public:
  RolloutCollector(TransportEnv env, int n_envs, std::uint64_t seed);

  /// `policies[i]` acts for robot i; both entries may point at one shared policy.
  RolloutBatch collect(const std::array<const GaussianPolicy*, kNumAgents>& policies, const CriticPair& critics,
                       int horizon, double gamma, double gae_lambda, std::mt19937_64& rng);

  const TransportEnv& env() const { return env_; }
  const std::vector<EnvState>& states() const { return states_; }
  void set_states(std::vector<EnvState> states);

 private:
  TransportEnv env_;
  std::vector<EnvState> states_;
};

enum class Stream { reward, cost };

struct AdvantageSet {
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;  // advantages + values, before any normalisation
  double mean = 0.0;
  double std = 1.0;
  bool normalized = false;
};

/// Recursive TD(lambda) advantages over an arbitrary per-step signal.
AdvantageSet gae(const RolloutBatch& batch, std::span<const double> signal, const Eigen::VectorXd& values,
                 const Eigen::VectorXd& next_values);
AdvantageSet gae(const RolloutBatch& batch, Stream stream);

/// Shifts and scales the advantages to zero mean and unit (population) variance.
void normalize(AdvantageSet& set);

/// Mean over episodes that both start and finish inside the batch of sum_t gamma^t X_t.
double empirical_J(const RolloutBatch& batch, std::span<const double> signal, double gamma);
double empirical_J(const RolloutBatch& batch, Stream stream, double gamma);

/// Number of episodes that start and finish inside the batch.
int completed_episodes(const RolloutBatch& batch);

/// Debug dump; the layout may change between versions.
void save_batch(const RolloutBatch& batch, std::ostream& out);
RolloutBatch load_batch(std::istream& in);

}  // namespace safemarl
