#pragma once

#include "safemarl/config.hpp"
#include "safemarl/policy.hpp"
#include "safemarl/transport_env.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace safemarl {

/// Displacement of the trajectory along the unit start-to-goal direction over
/// its polyline arc length.
double straightness(std::span<const Vec2> trajectory, const Vec2& p_start, const Vec2& p_goal);

/// arrival_step * dt when arrived, otherwise cap_s.
double time_consumption(bool arrived, int arrival_step, double dt, double cap_s);

struct EpisodeRow {
  std::uint64_t seed = 0;
  bool arrived = false;
  bool collided = false;
  int steps = 0;
  double time_s = 0.0;
  std::optional<double> straightness;  // arriving episodes only
  double total_reward = 0.0;
  double total_cost = 0.0;
  double discounted_cost = 0.0;
};

struct EvalReport {
  int n_episodes = 0;
  double collision_rate = 0.0;
  double arrival_rate = 0.0;
  std::optional<double> mean_straightness;
  double mean_time_s = 0.0;
  double mean_cost = 0.0;      // undiscounted episode cost
  double mean_reward = 0.0;
  std::vector<EpisodeRow> episodes;
};

struct EvalOptions {
  int n = 30;
  std::uint64_t seed = 0;
  double time_cap = 35.0;
  double gamma = 0.99;
  // One trace CSV per episode (episode_<k>.csv) when set.
  std::optional<std::filesystem::path> trace_dir;
};

/// Seed of evaluation episode k.
std::uint64_t eval_episode_seed(std::uint64_t seed, int k);

/// Runs n episodes with both robots at their mean actions.
EvalReport run_eval(std::span<const GaussianPolicy* const> policies, const TransportEnv& env,
                    const EvalOptions& options);

/// Loads a checkpoint and evaluates it on `scenario` (env.* keys; other keys
/// are ignored). Physical parameters must match those used in training.
EvalReport run_eval(const std::filesystem::path& checkpoint, const EnvConfig& scenario, const EvalOptions& options);

/// One episode at mean actions, written as a trace CSV.
EpisodeRow trace_episode(std::span<const GaussianPolicy* const> policies, const TransportEnv& env,
                         std::uint64_t episode_seed, double time_cap, double gamma, std::ostream* trace);

std::string report_to_json(const EvalReport& report);

}  // namespace safemarl
