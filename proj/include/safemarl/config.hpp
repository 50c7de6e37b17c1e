#pragma once

#include "safemarl/allocator.hpp"
#include "safemarl/scenario.hpp"
#include "safemarl/transport_env.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace safemarl {

enum class TrainMode { full, uca, penalty_only, shared_params, macpo_style };

std::string to_string(TrainMode mode);
/// Accepts both the short CLI names (penalty, shared, macpo) and the long ones.
TrainMode train_mode_from_string(std::string_view name);

struct EnvConfig {
  ScenarioKind kind = ScenarioKind::gate;
  ScenarioParams scenario;
  EnvParams params;
};

struct PolicyConfig {
  int hidden = 64;
  double init_log_std = -0.5;
  double rate = 3e-4;
  double critic_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainerConfig {
  TrainMode mode = TrainMode::full;
  int iterations = 300;
  int n_envs = 16;
  int horizon = 200;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;           // key: trainer.epsilon
  double kl_threshold = 0.02;  // delta
  int epochs = 4;
  int minibatch = 256;
  double cost_limit = 1.0;     // u
  double lagrange_rate = 0.05; // alpha
  double lambda_init = 0.0;
  bool freeze_multipliers = false;
  // Weight of the cost when folded into the reward (penalty_only, shared_params).
  double penalty_coef = 1.0;
  int checkpoint_every = 50;
};

struct EvalConfig {
  int episodes = 30;
  double time_cap = 35.0;
};

struct Config {
  EnvConfig env;
  PolicyConfig policy;
  TrainerConfig trainer;
  AllocatorConfig allocator;
  EvalConfig eval;

  /// Re-checks every key's range; throws ConfigError naming the first bad key.
  void validate() const;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, int line, const std::string& message);

  const std::string& key() const { return key_; }
  int line() const { return line_; }

 private:
  std::string key_;
  int line_;
};

/// `key = value` lines; `#` starts a comment. Unknown keys are rejected.
Config parse_config_text(std::string_view text, const Config& defaults = {});
Config parse_config(const std::filesystem::path& path, const Config& defaults = {});

/// Every key with its current value, one `key = value` line each.
std::string serialize_config(const Config& config);

bool operator==(const Config& lhs, const Config& rhs);

struct ConfigKey {
  std::string name;
  std::string range;
};

std::vector<ConfigKey> config_keys();

ScenarioSpec make_scenario(const EnvConfig& env);
TransportEnv make_env(const EnvConfig& env);

}  // namespace safemarl
