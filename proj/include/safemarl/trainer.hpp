#pragma once

#include "safemarl/adam.hpp"
#include "safemarl/allocator.hpp"
#include "safemarl/config.hpp"
#include "safemarl/policy.hpp"
#include "safemarl/rollout.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace safemarl {

/// d = u - J_C; negative when the team is already over its limit.
double compute_budget(double u, double j_cost);

/// lambda' = max(0, lambda + alpha * (L_C - c)).
double lagrange_update(double lambda, double alpha, double l_cost, double budget);

/// Uniform over the two orders of {0, 1}.
std::array<int, kNumAgents> sample_update_order(std::mt19937_64& rng);

struct ModeWiring {
  bool allocation = false;      // budgets chosen by the allocator
  bool uniform_split = false;   // c_a = c_b = d / 2
  bool lagrangian = false;      // per-robot multipliers
  bool shared_params = false;   // one parameter set for both robots
  bool sequential = false;      // randomized sequential per-agent updates
  bool penalty_in_reward = false;
};

ModeWiring apply_mode(TrainMode mode);

/// Per-step scalar fed to reward GAE: r, or r - coef * c when costs are folded in.
Eigen::VectorXd reward_signal(const RolloutBatch& batch, const ModeWiring& wiring, double penalty_coef);

struct LagrangeAgent {
  double lambda = 0.0;
  double budget = 0.0;
  double residual = 0.0;  // L_C - c at the last update
};

struct LagrangeState {
  std::array<LagrangeAgent, kNumAgents> agents;
};

struct UpdateSettings {
  double clip = 0.2;
  double kl_threshold = 0.02;
  int epochs = 4;
  int minibatch = 256;
};

struct AgentUpdateResult {
  Eigen::VectorXd logp;   // post-update log-probabilities of the stored actions
  Eigen::VectorXd ratio;  // post-update importance ratios
  double l_cost = 0.0;    // mean(ratio * cost advantage source)
  double kl = 0.0;        // mean sampled KL(behaviour || accepted policy)
  int accepted_epochs = 0;
  bool early_stopped = false;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Minibatch Adam on the clipped Lagrangian loss. An epoch whose mean sampled
/// KL exceeds the threshold is rolled back and ends the update.
AgentUpdateResult agent_update(GaussianPolicy& policy, AdamState& opt, const PolicySamples& samples,
                               const Eigen::MatrixXd& behavior_mean, const Eigen::VectorXd& behavior_log_std,
                               double lambda, const UpdateSettings& settings, std::mt19937_64& rng);

struct IterationReport {
  int iter = 0;
  double j_reward = 0.0;
  double j_cost = 0.0;
  double d = 0.0;
  std::optional<double> beta;
  std::optional<double> c_a;
  std::optional<double> c_b;
  std::optional<std::array<double, kNumAgents>> lambda;
  std::array<double, kNumAgents> l_cost{};
  std::array<double, kNumAgents> kl{};
  std::array<int, kNumAgents> order{0, 1};
  std::optional<double> objective;  // allocator observation recorded this iteration
  int episodes = 0;
  double wall_ms = 0.0;
};

void write_report_header(std::ostream& out);
void write_report_row(std::ostream& out, const IterationReport& report);
void write_allocation_header(std::ostream& out);
void write_allocation_row(std::ostream& out, const IterationReport& report);

struct TrainingState {
  Config config;
  std::uint64_t seed = 0;
  int iteration = 0;
  std::vector<GaussianPolicy> policies;  // a single entry when parameters are shared
  std::vector<AdamState> policy_opt;
  CriticPair critics;
  AdamState reward_critic_opt;
  AdamState cost_critic_opt;
  std::optional<LagrangeState> lagrange;
  std::optional<ConstraintAllocator> allocator;
  std::mt19937_64 rng;
  std::uint64_t env_seed_base = 0;
  double last_j_reward = 0.0;
  double last_j_cost = 0.0;

  bool shared() const { return policies.size() == 1; }
  const GaussianPolicy& policy(int agent) const { return policies[shared() ? 0 : static_cast<std::size_t>(agent)]; }
};

TrainingState init_training(const Config& config, std::uint64_t seed);

/// Env states used by iteration `iter`: fresh resets with per-iteration seeds.
std::vector<EnvState> iteration_start_states(const TransportEnv& env, const TrainingState& state);

/// One collect / estimate / allocate / update / multiplier / critic cycle.
IterationReport train_iteration(TrainingState& state, const TransportEnv& env);

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const IterationReport&)> on_iteration;
};

struct TrainResult {
  TrainingState state;
  std::vector<IterationReport> reports;
};

/// Runs config.trainer.iterations iterations. With an output directory it
/// writes report.csv, allocation.csv, config.txt and checkpoint.json (every
/// checkpoint_every iterations and at exit). A non-finite loss writes
/// diagnostic_checkpoint.json and rethrows.
TrainResult train(const Config& config, std::uint64_t seed, const TrainOptions& options = {});

void save_checkpoint(const TrainingState& state, const std::filesystem::path& path);
TrainingState load_checkpoint(const std::filesystem::path& path);

}  // namespace safemarl
