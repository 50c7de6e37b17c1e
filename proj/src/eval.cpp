#include "safemarl/eval.hpp"

#include "safemarl/trainer.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace safemarl {

double straightness(std::span<const Vec2> trajectory, const Vec2& p_start, const Vec2& p_goal) {
  if (trajectory.size() < 2) throw std::invalid_argument("straightness: need at least two points");
  const Vec2 axis = p_goal - p_start;
  const double axis_norm = axis.norm();
  if (!(axis_norm > 0.0)) throw std::invalid_argument("straightness: start and goal coincide");
  double arc = 0.0;
  for (std::size_t i = 1; i < trajectory.size(); ++i) arc += (trajectory[i] - trajectory[i - 1]).norm();
  if (!(arc > 0.0)) throw std::invalid_argument("straightness: zero arc length");
  const double along = (trajectory.back() - p_start).dot(axis) / axis_norm;
  return along / arc;
}

double time_consumption(bool arrived, int arrival_step, double dt, double cap_s) {
  if (!(cap_s > 0.0)) throw std::invalid_argument("time_consumption: cap must be > 0");
  if (!arrived) return cap_s;
  return std::min(cap_s, arrival_step * dt);
}

std::uint64_t eval_episode_seed(std::uint64_t seed, int k) {
  return next_episode_seed(next_episode_seed(seed) + static_cast<std::uint64_t>(k));
}

EpisodeRow trace_episode(std::span<const GaussianPolicy* const> policies, const TransportEnv& env,
                         std::uint64_t episode_seed, double time_cap, double gamma, std::ostream* trace) {
  if (policies.size() != kNumAgents) throw std::invalid_argument("eval: expected one policy per robot");
  EpisodeRow row;
  row.seed = episode_seed;
  EnvState state = env.reset(episode_seed);
  std::vector<Vec2> path{state.midpoint()};
  const Vec2 start = state.midpoint();
  if (trace) {
    write_trace_header(*trace);
    write_trace_row(*trace, state, nullptr);
  }
  double discount = 1.0;
  while (!state.terminal()) {
    const ObservationPair obs = env.observe(state);
    ActionPair actions;
    for (int i = 0; i < kNumAgents; ++i) {
      const GaussianSingle dist = forward_policy(*policies[i], obs[i]);
      actions[i] = command_from(dist.mean);
    }
    auto [next, outcome] = env.step(state, actions);
    state = std::move(next);
    path.push_back(state.midpoint());
    row.total_reward += outcome.reward;
    row.total_cost += outcome.cost;
    row.discounted_cost += discount * outcome.cost;
    discount *= gamma;
    row.collided = row.collided || outcome.collided;
    if (trace) write_trace_row(*trace, state, &outcome);
  }
  row.arrived = state.arrived;
  row.steps = state.step_index;
  row.time_s = time_consumption(row.arrived, row.steps, env.params().dt, time_cap);
  if (row.arrived) row.straightness = straightness(path, start, env.scenario().goal);
  return row;
}

EvalReport run_eval(std::span<const GaussianPolicy* const> policies, const TransportEnv& env,
                    const EvalOptions& options) {
  if (options.n < 1) throw std::invalid_argument("run_eval: n must be >= 1");
  if (!(options.time_cap > 0.0)) throw std::invalid_argument("run_eval: time cap must be > 0");
  for (const auto* p : policies) {
    if (p->trunk.input_dim() != kObsDim || p->action_dim() != kActDim) {
      throw std::invalid_argument("run_eval: policy dimensions do not match the environment");
    }
  }
  if (options.trace_dir) std::filesystem::create_directories(*options.trace_dir);
  EvalReport report;
  report.n_episodes = options.n;
  int collided = 0;
  int arrived = 0;
  double straight_sum = 0.0;
  double time_sum = 0.0;
  for (int k = 0; k < options.n; ++k) {
    std::ofstream trace;
    if (options.trace_dir) {
      trace.open(*options.trace_dir / ("episode_" + std::to_string(k) + ".csv"), std::ios::trunc);
      if (!trace) throw std::runtime_error("run_eval: cannot write trace into " + options.trace_dir->string());
    }
    EpisodeRow row = trace_episode(policies, env, eval_episode_seed(options.seed, k), options.time_cap, options.gamma,
                                   options.trace_dir ? &trace : nullptr);
    collided += row.collided ? 1 : 0;
    arrived += row.arrived ? 1 : 0;
    if (row.straightness) straight_sum += *row.straightness;
    time_sum += row.time_s;
    report.mean_cost += row.total_cost;
    report.mean_reward += row.total_reward;
    report.episodes.push_back(std::move(row));
  }
  const double n = options.n;
  report.collision_rate = collided / n;
  report.arrival_rate = arrived / n;
  if (arrived > 0) report.mean_straightness = straight_sum / arrived;
  report.mean_time_s = time_sum / n;
  report.mean_cost /= n;
  report.mean_reward /= n;
  return report;
}

namespace {

void require_same(const char* key, double trained, double requested) {
  if (trained != requested) {
    throw std::invalid_argument(std::string("checkpoint/scenario mismatch on env.") + key + ": trained with " +
                                std::to_string(trained) + ", scenario has " + std::to_string(requested));
  }
}

}  // namespace

EvalReport run_eval(const std::filesystem::path& checkpoint, const EnvConfig& scenario, const EvalOptions& options) {
  const TrainingState state = load_checkpoint(checkpoint);
  const EnvParams& trained = state.config.env.params;
  const EnvParams& wanted = scenario.params;
  require_same("dt", trained.dt, wanted.dt);
  require_same("tau", trained.tau, wanted.tau);
  require_same("link_length", trained.link_length, wanted.link_length);
  require_same("probe_radius", trained.probe_radius, wanted.probe_radius);
  require_same("v_max", trained.v_max, wanted.v_max);
  require_same("omega_max", trained.omega_max, wanted.omega_max);
  const TransportEnv env = make_env(scenario);
  const std::array<const GaussianPolicy*, kNumAgents> policies{&state.policy(0), &state.policy(1)};
  return run_eval(policies, env, options);
}

std::string report_to_json(const EvalReport& report) {
  using nlohmann::json;
  json j;
  j["n_episodes"] = report.n_episodes;
  j["collision_rate"] = report.collision_rate;
  j["arrival_rate"] = report.arrival_rate;
  j["mean_straightness"] = report.mean_straightness ? json(*report.mean_straightness) : json(nullptr);
  j["mean_time_s"] = report.mean_time_s;
  j["mean_cost"] = report.mean_cost;
  j["mean_reward"] = report.mean_reward;
  json rows = json::array();
  for (const auto& r : report.episodes) {
    rows.push_back({{"seed", r.seed},
                    {"arrived", r.arrived},
                    {"collided", r.collided},
                    {"steps", r.steps},
                    {"time_s", r.time_s},
                    {"straightness", r.straightness ? json(*r.straightness) : json(nullptr)},
                    {"total_reward", r.total_reward},
                    {"total_cost", r.total_cost},
                    {"discounted_cost", r.discounted_cost}});
  }
  j["episodes"] = rows;
  return j.dump(2) + "\n";
}

}  // namespace safemarl
