#include "safemarl/transport_env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

namespace safemarl {

void EnvParams::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("env: dt must be > 0");
  if (!(tau > 0.0)) throw std::invalid_argument("env: tau must be > 0");
  if (!(link_length > 0.0)) throw std::invalid_argument("env: link_length must be > 0");
  if (!(probe_radius > 0.0)) throw std::invalid_argument("env: probe_radius must be > 0");
  if (!(v_max > 0.0) || !(omega_max > 0.0)) throw std::invalid_argument("env: action bounds must be > 0");
  if (weights.move_forward < 0.0 || weights.destination < 0.0 || weights.collaboration < 0.0 ||
      weights.collision < 0.0) {
    throw std::invalid_argument("env: reward and cost weights must be >= 0");
  }
}

double wrap_angle(double angle) {
  constexpr double pi = std::numbers::pi;
  double wrapped = std::remainder(angle, 2.0 * pi);
  if (wrapped <= -pi) wrapped += 2.0 * pi;
  return wrapped;
}

double reward_move_forward(const Vec2& p_t, const Vec2& p_prev, const Vec2& p_goal, double w_f) {
  return (p_t - p_goal).norm() < (p_prev - p_goal).norm() ? w_f : 0.0;
}

double reward_destination(const Vec2& p_t, const Vec2& p_goal, double arrival_radius, double w_d) {
  return (p_t - p_goal).norm() < arrival_radius ? w_d : 0.0;
}

double cost_collaboration(double along_link_a, double along_link_b, double w_m) {
  return along_link_a * along_link_b < 0.0 ? w_m : 0.0;
}

double cost_collision(std::span<const double> probes, double w_c) {
  int hits = 0;
  for (double o : probes) hits += o > 0.0 ? 1 : 0;
  return w_c * hits;
}

ActionPair clamp_actions(const ActionPair& actions, const EnvParams& params) {
  ActionPair out = actions;
  for (auto& cmd : out) {
    cmd.velocity.x() = std::clamp(cmd.velocity.x(), -params.v_max, params.v_max);
    cmd.velocity.y() = std::clamp(cmd.velocity.y(), -params.v_max, params.v_max);
    cmd.yaw_rate = std::clamp(cmd.yaw_rate, -params.omega_max, params.omega_max);
  }
  return out;
}

RobotCommand command_from(std::span<const double> action) {
  if (action.size() != kActDim) throw std::invalid_argument("action must have 3 components");
  return RobotCommand{Vec2{action[0], action[1]}, action[2]};
}

std::uint64_t next_episode_seed(std::uint64_t seed) {
  // splitmix64 finaliser
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

TransportEnv::TransportEnv(ScenarioSpec scenario, EnvParams params)
    : scenario_(std::move(scenario)), params_(params) {
  scenario_.validate();
  params_.validate();
}

std::array<Probes, kNumAgents> TransportEnv::detect_collisions(const EnvState& state) const {
  std::array<Probes, kNumAgents> result{};
  const double r = params_.probe_radius;
  const std::array<Vec2, kNumProbes> offsets{Vec2{r, 0.0}, Vec2{0.0, r}, Vec2{-r, 0.0}, Vec2{0.0, -r}};
  for (int i = 0; i < kNumAgents; ++i) {
    const auto& robot = state.robots[i];
    const double c = std::cos(robot.yaw);
    const double s = std::sin(robot.yaw);
    for (int k = 0; k < kNumProbes; ++k) {
      const Vec2 world{robot.position.x() + c * offsets[k].x() - s * offsets[k].y(),
                       robot.position.y() + s * offsets[k].x() + c * offsets[k].y()};
      double depth = 0.0;
      for (const auto& obstacle : scenario_.obstacles) depth = std::max(depth, penetration_depth(obstacle, world));
      result[i][k] = depth;
    }
  }
  return result;
}

bool TransportEnv::rod_contact(const EnvState& state) const {
  constexpr int samples = 24;
  const Vec2& a = state.robots[0].position;
  const Vec2& b = state.robots[1].position;
  for (int k = 0; k <= samples; ++k) {
    const Vec2 p = a + (b - a) * (static_cast<double>(k) / samples);
    for (const auto& obstacle : scenario_.obstacles) {
      if (penetration_depth(obstacle, p) > 0.0) return true;
    }
  }
  return false;
}

EnvState TransportEnv::enforce_link(const EnvState& state) const {
  EnvState out = state;
  auto& a = out.robots[0];
  auto& b = out.robots[1];
  const Vec2 delta = b.position - a.position;
  const double dist = delta.norm();
  if (!(dist > 0.0)) throw std::domain_error("enforce_link: robots coincide, link direction undefined");
  const Vec2 dir = delta / dist;
  const double half = 0.5 * params_.link_length;
  if (std::abs(dist - params_.link_length) > 1e-12) {
    const Vec2 mid = 0.5 * (a.position + b.position);
    a.position = mid - half * dir;
    b.position = mid + half * dir;
  }
  const double rel = (b.velocity - a.velocity).dot(dir);
  if (rel != 0.0) {
    a.velocity += 0.5 * rel * dir;
    b.velocity -= 0.5 * rel * dir;
  }
  return out;
}

ObservationPair TransportEnv::observe(const EnvState& state) const {
  ObservationPair obs{};
  for (int i = 0; i < kNumAgents; ++i) {
    const auto& self = state.robots[i];
    const auto& other = state.robots[1 - i];
    const Vec2 rel = other.position - self.position;
    const double n = rel.norm();
    const Vec2 dir = n > 0.0 ? Vec2(rel / n) : Vec2::Zero();
    auto& o = obs[i];
    o[0] = scenario_.goal.x();
    o[1] = scenario_.goal.y();
    o[2] = self.position.x();
    o[3] = self.position.y();
    o[4] = self.prev_position.x();
    o[5] = self.prev_position.y();
    o[6] = self.velocity.x();
    o[7] = self.velocity.y();
    o[8] = self.yaw_rate;
    o[9] = self.yaw;
    for (int k = 0; k < kNumProbes; ++k) o[10 + k] = self.probes[k];
    o[14] = rel.x();
    o[15] = rel.y();
    o[16] = dir.x();
    o[17] = dir.y();
  }
  return obs;
}

EnvState TransportEnv::reset(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(scenario_.start_region.lo.x(), scenario_.start_region.hi.x());
  std::uniform_real_distribution<double> uy(scenario_.start_region.lo.y(), scenario_.start_region.hi.y());
  std::uniform_real_distribution<double> uh(-scenario_.start_heading_range, scenario_.start_heading_range);
  std::uniform_real_distribution<double> uyaw(-std::numbers::pi, std::numbers::pi);
  constexpr int kMaxTries = 1000;
  const double half = 0.5 * params_.link_length;
  for (int attempt = 0; attempt < kMaxTries; ++attempt) {
    EnvState state;
    state.seed = seed;
    const Vec2 mid{ux(rng), uy(rng)};
    const double heading = scenario_.start_heading + uh(rng);
    const Vec2 dir{std::cos(heading), std::sin(heading)};
    state.robots[0].position = mid - half * dir;
    state.robots[1].position = mid + half * dir;
    for (auto& robot : state.robots) {
      robot.prev_position = robot.position;
      robot.yaw = wrap_angle(uyaw(rng));
    }
    const auto probes = detect_collisions(state);
    bool clear = true;
    for (const auto& p : probes) {
      for (double o : p) clear = clear && o == 0.0;
    }
    if (!clear) continue;
    state.robots[0].probes = probes[0];
    state.robots[1].probes = probes[1];
    return state;
  }
  throw std::runtime_error("reset: no collision-free placement found in the start region");
}

std::pair<EnvState, StepOutcome> TransportEnv::step(const EnvState& state, const ActionPair& actions) const {
  if (state.terminal()) throw std::logic_error("step: episode already terminated");
  for (const auto& cmd : actions) {
    if (!std::isfinite(cmd.velocity.x()) || !std::isfinite(cmd.velocity.y()) || !std::isfinite(cmd.yaw_rate)) {
      throw std::invalid_argument("step: non-finite action");
    }
  }
  const ActionPair cmd = clamp_actions(actions, params_);
  const auto& w = params_.weights;

  const Vec2 link = state.robots[1].position - state.robots[0].position;
  const Vec2 link_dir = link / link.norm();
  const double along_a = cmd[0].velocity.dot(link_dir);
  const double along_b = cmd[1].velocity.dot(link_dir);

  EnvState next = state;
  const double gain = params_.dt / params_.tau;
  for (int i = 0; i < kNumAgents; ++i) {
    auto& robot = next.robots[i];
    robot.prev_position = robot.position;
    robot.velocity += gain * (cmd[i].velocity - robot.velocity);
    robot.yaw_rate += gain * (cmd[i].yaw_rate - robot.yaw_rate);
    robot.position += params_.dt * robot.velocity;
    robot.yaw = wrap_angle(robot.yaw + params_.dt * robot.yaw_rate);
  }
  next = enforce_link(next);
  const auto probes = detect_collisions(next);
  std::array<double, kNumAgents * kNumProbes> all{};
  for (int i = 0; i < kNumAgents; ++i) {
    next.robots[i].probes = probes[i];
    for (int k = 0; k < kNumProbes; ++k) all[i * kNumProbes + k] = probes[i][k];
  }
  next.step_index = state.step_index + 1;

  StepOutcome out;
  const Vec2 mid = next.midpoint();
  const Vec2 prev_mid = state.midpoint();
  out.reward = reward_move_forward(mid, prev_mid, scenario_.goal, w.move_forward) +
               reward_destination(mid, scenario_.goal, scenario_.arrival_radius, w.destination);
  out.collaboration_cost = cost_collaboration(along_a, along_b, w.collaboration);
  out.collision_cost = cost_collision(all, w.collision);
  out.cost = out.collaboration_cost + out.collision_cost;
  out.collided = false;
  for (double o : all) out.collided = out.collided || o > 0.0;
  next.arrived = (mid - scenario_.goal).norm() < scenario_.arrival_radius;
  next.timed_out = !next.arrived && next.step_index >= scenario_.episode_cap;
  out.arrived = next.arrived;
  out.timed_out = next.timed_out;
  out.rod_contact = rod_contact(next);
  out.observations = observe(next);
  return {std::move(next), out};
}

std::pair<std::vector<EnvState>, std::vector<StepOutcome>> TransportEnv::batch_step(
    std::span<const EnvState> states, std::span<const ActionPair> actions) const {
  if (states.size() != actions.size()) throw std::invalid_argument("batch_step: states/actions length mismatch");
  std::vector<EnvState> next;
  std::vector<StepOutcome> outcomes;
  next.reserve(states.size());
  outcomes.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    auto [s, o] = step(states[i], actions[i]);
    if (s.terminal()) s = reset(next_episode_seed(s.seed));
    next.push_back(std::move(s));
    outcomes.push_back(o);
  }
  return {std::move(next), std::move(outcomes)};
}

void write_trace_header(std::ostream& out) {
  out << "step,x_a,y_a,theta_a,x_b,y_b,theta_b,v_ax,v_ay,v_bx,v_by,reward,cost,collided,arrived\n";
}

void write_trace_row(std::ostream& out, const EnvState& state, const StepOutcome* outcome) {
  const auto& a = state.robots[0];
  const auto& b = state.robots[1];
  out << state.step_index << ',' << a.position.x() << ',' << a.position.y() << ',' << a.yaw << ','
      << b.position.x() << ',' << b.position.y() << ',' << b.yaw << ',' << a.velocity.x() << ','
      << a.velocity.y() << ',' << b.velocity.x() << ',' << b.velocity.y() << ','
      << (outcome ? outcome->reward : 0.0) << ',' << (outcome ? outcome->cost : 0.0) << ','
      << (outcome && outcome->collided ? 1 : 0) << ',' << (outcome && outcome->arrived ? 1 : 0) << '\n';
}

}  // namespace safemarl
