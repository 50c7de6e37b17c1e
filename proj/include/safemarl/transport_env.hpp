#pragma once

#include "safemarl/scenario.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace safemarl {

inline constexpr int kNumAgents = 2;
inline constexpr int kNumProbes = 4;
inline constexpr int kObsDim = 18;
inline constexpr int kActDim = 3;

using Probes = std::array<double, kNumProbes>;
using Observation = std::array<double, kObsDim>;
using ObservationPair = std::array<Observation, kNumAgents>;

struct RewardWeights {
  double move_forward = 1.0;   // w_f
  double destination = 10.0;   // w_d
  double collaboration = 1.0;  // w_m
  double collision = 5.0;      // w_c
};

struct EnvParams {
  double dt = 0.1;
  double tau = 0.2;
  double link_length = 1.2;
  double probe_radius = 0.35;
  double v_max = 1.0;
  double omega_max = 1.5;
  RewardWeights weights;

  void validate() const;
};

struct RobotState {
  Vec2 position = Vec2::Zero();
  Vec2 prev_position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  double yaw = 0.0;
  double yaw_rate = 0.0;
  Probes probes{};
};

struct EnvState {
  std::array<RobotState, kNumAgents> robots;
  int step_index = 0;
  bool arrived = false;
  bool timed_out = false;
  // Seed of the current episode; auto-reset derives the next one from it.
  std::uint64_t seed = 0;

  bool terminal() const { return arrived || timed_out; }
  Vec2 midpoint() const { return 0.5 * (robots[0].position + robots[1].position); }
};

struct RobotCommand {
  Vec2 velocity = Vec2::Zero();
  double yaw_rate = 0.0;
};

using ActionPair = std::array<RobotCommand, kNumAgents>;

struct StepOutcome {
  double reward = 0.0;
  double cost = 0.0;
  double collaboration_cost = 0.0;
  double collision_cost = 0.0;
  bool collided = false;
  bool arrived = false;
  bool timed_out = false;
  // Payload rod passes through an obstacle. Logged only, carries no cost.
  bool rod_contact = false;
  ObservationPair observations{};
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

double reward_move_forward(const Vec2& p_t, const Vec2& p_prev, const Vec2& p_goal, double w_f);
double reward_destination(const Vec2& p_t, const Vec2& p_goal, double arrival_radius, double w_d);
double cost_collaboration(double along_link_a, double along_link_b, double w_m);
/// `probes` holds every probe of both robots.
double cost_collision(std::span<const double> probes, double w_c);

/// Clamps each command component to its bound.
ActionPair clamp_actions(const ActionPair& actions, const EnvParams& params);

/// Converts a flat 3-vector (vx, vy, yaw rate) into a command.
RobotCommand command_from(std::span<const double> action);

class TransportEnv {
 public:
  TransportEnv(ScenarioSpec scenario, EnvParams params);

  const ScenarioSpec& scenario() const { return scenario_; }
  const EnvParams& params() const { return params_; }

  EnvState reset(std::uint64_t seed) const;
  ObservationPair observe(const EnvState& state) const;

  std::pair<EnvState, StepOutcome> step(const EnvState& state, const ActionPair& actions) const;

  /// Symmetric projection onto the rigid-link manifold.
  EnvState enforce_link(const EnvState& state) const;

  std::array<Probes, kNumAgents> detect_collisions(const EnvState& state) const;

  bool rod_contact(const EnvState& state) const;

  /// Element-wise `step`; terminal environments are replaced by a fresh reset
  /// seeded from their previous episode seed. Outcomes describe the step taken.
  std::pair<std::vector<EnvState>, std::vector<StepOutcome>> batch_step(std::span<const EnvState> states,
                                                                         std::span<const ActionPair> actions) const;

 private:
  ScenarioSpec scenario_;
  EnvParams params_;
};

/// Seed of the episode following one seeded with `seed`.
std::uint64_t next_episode_seed(std::uint64_t seed);

/// Writes the trace header used by `write_trace_row`.
void write_trace_header(std::ostream& out);
void write_trace_row(std::ostream& out, const EnvState& state, const StepOutcome* outcome);

}  // namespace safemarl
