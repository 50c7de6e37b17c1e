#include "safemarl/trainer.hpp"

#include "safemarl/surrogate.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace safemarl {

double compute_budget(double u, double j_cost) { return u - j_cost; }

double lagrange_update(double lambda, double alpha, double l_cost, double budget) {
  if (!(alpha > 0.0)) throw std::invalid_argument("lagrange_update: alpha must be > 0");
  return std::max(0.0, lambda + alpha * (l_cost - budget));
}

std::array<int, kNumAgents> sample_update_order(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> coin(0, 1);
  return coin(rng) == 0 ? std::array<int, kNumAgents>{0, 1} : std::array<int, kNumAgents>{1, 0};
}

ModeWiring apply_mode(TrainMode mode) {
  ModeWiring w;
  switch (mode) {
    case TrainMode::full:
      w.allocation = true;
      w.lagrangian = true;
      w.sequential = true;
      return w;
    case TrainMode::uca:
      w.uniform_split = true;
      w.lagrangian = true;
      w.sequential = true;
      return w;
    case TrainMode::penalty_only:
      w.penalty_in_reward = true;
      w.sequential = true;
      return w;
    case TrainMode::shared_params:
      w.penalty_in_reward = true;
      w.shared_params = true;
      return w;
    case TrainMode::macpo_style:
      w.allocation = true;
      w.lagrangian = true;
      w.shared_params = true;
      return w;
  }
  throw std::invalid_argument("apply_mode: unknown mode");
}

Eigen::VectorXd reward_signal(const RolloutBatch& batch, const ModeWiring& wiring, double penalty_coef) {
  if (!wiring.penalty_in_reward) return batch.reward;
  return batch.reward - penalty_coef * batch.cost;
}

namespace {

PolicySamples gather(const PolicySamples& all, std::span<const Eigen::Index> idx) {
  const auto m = static_cast<Eigen::Index>(idx.size());
  PolicySamples out;
  out.obs.resize(all.obs.rows(), m);
  out.actions.resize(all.actions.rows(), m);
  out.behavior_logp.resize(m);
  out.adv_reward.resize(m);
  out.adv_cost.resize(m);
  const bool per_sample = all.lambda.size() > 0;
  if (per_sample) out.lambda.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::Index i = idx[static_cast<std::size_t>(j)];
    out.obs.col(j) = all.obs.col(i);
    out.actions.col(j) = all.actions.col(i);
    out.behavior_logp(j) = all.behavior_logp(i);
    out.adv_reward(j) = all.adv_reward(i);
    out.adv_cost(j) = all.adv_cost(i);
    if (per_sample) out.lambda(j) = all.lambda(i);
  }
  return out;
}

double mean_kl(const GaussianPolicy& policy, const Eigen::MatrixXd& obs, const Eigen::MatrixXd& behavior_mean,
               const Eigen::VectorXd& behavior_log_std) {
  const GaussianBatch dist = forward_policy(policy, obs);
  const int k = policy.action_dim();
  std::vector<double> old_std(static_cast<std::size_t>(k));
  std::vector<double> new_std(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    old_std[j] = std::exp(behavior_log_std(j));
    new_std[j] = dist.std(j);
  }
  double total = 0.0;
  std::vector<double> m_old(static_cast<std::size_t>(k));
  std::vector<double> m_new(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < obs.cols(); ++i) {
    for (int j = 0; j < k; ++j) {
      m_old[j] = behavior_mean(j, i);
      m_new[j] = dist.mean(j, i);
    }
    total += kl_diag_gaussian(m_old, old_std, m_new, new_std);
  }
  return total / static_cast<double>(obs.cols());
}

bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void regress_critic(Critic& critic, AdamState& opt, const Eigen::MatrixXd& input, const Eigen::VectorXd& targets,
                    int epochs, int minibatch, std::mt19937_64& rng, const char* name) {
  const Eigen::Index n = input.cols();
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Eigen::Index start = 0; start < n; start += minibatch) {
      const Eigen::Index m = std::min<Eigen::Index>(minibatch, n - start);
      Eigen::MatrixXd x(input.rows(), m);
      Eigen::VectorXd y(m);
      for (Eigen::Index j = 0; j < m; ++j) {
        x.col(j) = input.col(perm[static_cast<std::size_t>(start + j)]);
        y(j) = targets(perm[static_cast<std::size_t>(start + j)]);
      }
      const LossAndGrad g = critic_loss(critic, x, y);
      if (!std::isfinite(g.loss) || !all_finite(g.grad)) {
        throw NumericalError(std::string("non-finite ") + name + " critic loss");
      }
      opt_step(critic.params, g.grad, opt);
    }
  }
}

Eigen::VectorXd scaled(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  const double var = (v.array() - mean).square().mean();
  const double sd = std::sqrt(var);
  return (v.array() - mean) / (sd > 1e-8 ? sd : 1.0);
}

double segment_mean(const Eigen::VectorXd& v, Eigen::Index start, Eigen::Index count) {
  return v.segment(start, count).mean();
}

}  // namespace

AgentUpdateResult agent_update(GaussianPolicy& policy, AdamState& opt, const PolicySamples& samples,
                               const Eigen::MatrixXd& behavior_mean, const Eigen::VectorXd& behavior_log_std,
                               double lambda, const UpdateSettings& settings, std::mt19937_64& rng) {
  const Eigen::Index n = samples.obs.cols();
  if (n == 0) throw std::invalid_argument("agent_update: empty batch");
  if (behavior_mean.cols() != n || behavior_log_std.size() != policy.action_dim()) {
    throw std::invalid_argument("agent_update: behaviour distribution does not match the samples");
  }
  if (settings.epochs < 1 || settings.minibatch < 1) throw std::invalid_argument("agent_update: bad schedule");

  AgentUpdateResult out;
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  for (int epoch = 0; epoch < settings.epochs; ++epoch) {
    const std::vector<double> saved_params = policy.params;
    const AdamState saved_opt = opt;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Eigen::Index start = 0; start < n; start += settings.minibatch) {
      const Eigen::Index m = std::min<Eigen::Index>(settings.minibatch, n - start);
      const PolicySamples sub =
          gather(samples, std::span<const Eigen::Index>(perm.data() + start, static_cast<std::size_t>(m)));
      const LossAndGrad g = lagrangian_policy_loss(policy, sub, lambda, settings.clip);
      if (!std::isfinite(g.loss) || !all_finite(g.grad)) throw NumericalError("non-finite policy loss");
      opt_step(policy.params, g.grad, opt);
      policy.clamp_log_std();
    }
    const double kl = mean_kl(policy, samples.obs, behavior_mean, behavior_log_std);
    if (!(kl <= settings.kl_threshold)) {
      policy.params = saved_params;
      opt = saved_opt;
      out.early_stopped = true;
      break;
    }
    ++out.accepted_epochs;
  }

  out.kl = mean_kl(policy, samples.obs, behavior_mean, behavior_log_std);
  const GaussianBatch dist = forward_policy(policy, samples.obs);
  const int k = policy.action_dim();
  out.logp.resize(n);
  out.ratio.resize(n);
  std::vector<double> mean(static_cast<std::size_t>(k));
  std::vector<double> sd(static_cast<std::size_t>(k));
  std::vector<double> act(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) sd[j] = dist.std(j);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      mean[j] = dist.mean(j, i);
      act[j] = samples.actions(j, i);
    }
    out.logp(i) = log_prob(mean, sd, act);
    out.ratio(i) = ratio(out.logp(i), samples.behavior_logp(i));
  }
  out.l_cost = (out.ratio.array() * samples.adv_cost.array()).mean();
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

void write_report_header(std::ostream& out) {
  out << "iter,J_R,J_C,d,beta,c_a,c_b,lambda_a,lambda_b,L_C_a,L_C_b,kl_a,kl_b,wall_ms\n";
}

void write_report_row(std::ostream& out, const IterationReport& r) {
  out << r.iter << ',' << fmt(r.j_reward) << ',' << fmt(r.j_cost) << ',' << fmt(r.d) << ',' << fmt(r.beta) << ','
      << fmt(r.c_a) << ',' << fmt(r.c_b) << ',';
  if (r.lambda) {
    out << fmt((*r.lambda)[0]) << ',' << fmt((*r.lambda)[1]) << ',';
  } else {
    out << ",,";
  }
  out << fmt(r.l_cost[0]) << ',' << fmt(r.l_cost[1]) << ',' << fmt(r.kl[0]) << ',' << fmt(r.kl[1]) << ','
      << fmt(r.wall_ms) << '\n';
}

void write_allocation_header(std::ostream& out) { out << "iter,beta,c_a,c_b,d,objective\n"; }

void write_allocation_row(std::ostream& out, const IterationReport& r) {
  out << r.iter << ',' << fmt(r.beta) << ',' << fmt(r.c_a) << ',' << fmt(r.c_b) << ',' << fmt(r.d) << ','
      << fmt(r.objective) << '\n';
}

TrainingState init_training(const Config& config, std::uint64_t seed) {
  config.validate();
  const ModeWiring wiring = apply_mode(config.trainer.mode);
  TrainingState s;
  s.config = config;
  s.seed = seed;
  std::uint64_t chain = seed;
  auto next = [&chain] {
    chain = next_episode_seed(chain);
    return chain;
  };
  const AdamConfig policy_adam{config.policy.rate, config.policy.beta1, config.policy.beta2, config.policy.epsilon};
  const AdamConfig critic_adam{config.policy.critic_rate, config.policy.beta1, config.policy.beta2,
                               config.policy.epsilon};
  const int n_policies = wiring.shared_params ? 1 : kNumAgents;
  for (int i = 0; i < kNumAgents; ++i) {
    const std::uint64_t policy_seed = next();
    if (i >= n_policies) continue;
    s.policies.push_back(
        GaussianPolicy::create(kObsDim, config.policy.hidden, kActDim, config.policy.init_log_std, policy_seed));
    s.policy_opt.push_back(AdamState::create(s.policies.back().params.size(), policy_adam));
  }
  s.critics.reward = Critic::create(2 * kObsDim, config.policy.hidden, next());
  s.critics.cost = Critic::create(2 * kObsDim, config.policy.hidden, next());
  s.reward_critic_opt = AdamState::create(s.critics.reward.params.size(), critic_adam);
  s.cost_critic_opt = AdamState::create(s.critics.cost.params.size(), critic_adam);
  s.rng.seed(next());
  s.env_seed_base = next();
  const std::uint64_t allocator_seed = next();
  if (wiring.lagrangian) {
    LagrangeState l;
    for (auto& a : l.agents) a.lambda = config.trainer.lambda_init;
    s.lagrange = l;
  }
  if (wiring.allocation) s.allocator.emplace(config.allocator, allocator_seed);
  return s;
}

std::vector<EnvState> iteration_start_states(const TransportEnv& env, const TrainingState& state) {
  const int n = state.config.trainer.n_envs;
  std::vector<EnvState> states;
  states.reserve(static_cast<std::size_t>(n));
  for (int e = 0; e < n; ++e) {
    const std::uint64_t key =
        state.env_seed_base + static_cast<std::uint64_t>(state.iteration) * static_cast<std::uint64_t>(n) +
        static_cast<std::uint64_t>(e);
    states.push_back(env.reset(next_episode_seed(key)));
  }
  return states;
}

IterationReport train_iteration(TrainingState& state, const TransportEnv& env) {
  const auto t0 = std::chrono::steady_clock::now();
  const TrainerConfig& tc = state.config.trainer;
  const ModeWiring wiring = apply_mode(tc.mode);

  RolloutCollector collector(env, tc.n_envs, state.env_seed_base);
  collector.set_states(iteration_start_states(env, state));
  const std::array<const GaussianPolicy*, kNumAgents> acting{&state.policy(0), &state.policy(1)};
  const RolloutBatch batch = collector.collect(acting, state.critics, tc.horizon, tc.gamma, tc.gae_lambda, state.rng);

  IterationReport rep;
  rep.iter = state.iteration;
  rep.episodes = completed_episodes(batch);
  if (rep.episodes > 0) {
    state.last_j_reward = empirical_J(batch, Stream::reward, tc.gamma);
    state.last_j_cost = empirical_J(batch, Stream::cost, tc.gamma);
  }
  rep.j_reward = state.last_j_reward;
  rep.j_cost = state.last_j_cost;
  rep.d = compute_budget(tc.cost_limit, rep.j_cost);

  std::optional<Allocation> alloc;
  if (wiring.allocation) {
    const bool had_previous = state.allocator->has_previous();
    alloc = state.allocator->step(rep.j_reward, rep.j_cost, rep.d);
    if (had_previous) rep.objective = state.allocator->last_objective();
  } else if (wiring.uniform_split) {
    alloc = split_budget(rep.d, 0.5);
  }
  if (alloc) {
    rep.beta = alloc->beta;
    rep.c_a = alloc->c_a;
    rep.c_b = alloc->c_b;
  }

  const Eigen::VectorXd signal = reward_signal(batch, wiring, tc.penalty_coef);
  AdvantageSet adv_r = gae(batch, std::span<const double>(signal.data(), static_cast<std::size_t>(signal.size())),
                           batch.value_reward, batch.next_value_reward);
  normalize(adv_r);
  const AdvantageSet adv_c = gae(batch, Stream::cost);
  const Eigen::VectorXd cost_raw = adv_c.advantages;
  const Eigen::VectorXd cost_scaled = scaled(cost_raw);

  const UpdateSettings settings{tc.clip, tc.kl_threshold, tc.epochs, tc.minibatch};
  const Eigen::Index n = batch.size();
  auto lambda_of = [&](int agent) { return state.lagrange ? state.lagrange->agents[agent].lambda : 0.0; };

  if (!wiring.shared_params) {
    const auto order = wiring.sequential ? sample_update_order(state.rng) : std::array<int, kNumAgents>{0, 1};
    rep.order = order;
    Eigen::VectorXd carry = Eigen::VectorXd::Ones(n);
    for (const int agent : order) {
      const AgentSamples& a = batch.agents[agent];
      PolicySamples ps;
      ps.obs = a.obs;
      ps.actions = a.actions;
      ps.behavior_logp = a.logp;
      ps.adv_reward = carry.cwiseProduct(adv_r.advantages);
      ps.adv_cost = carry.cwiseProduct(cost_scaled);
      const AgentUpdateResult res = agent_update(state.policies[agent], state.policy_opt[agent], ps, a.means,
                                                 a.log_std, lambda_of(agent), settings, state.rng);
      rep.l_cost[agent] = (res.ratio.array() * carry.array() * cost_raw.array()).mean();
      rep.kl[agent] = res.kl;
      carry = carry.cwiseProduct(res.ratio);
    }
  } else {
    PolicySamples ps;
    ps.obs.resize(kObsDim, 2 * n);
    ps.actions.resize(kActDim, 2 * n);
    ps.behavior_logp.resize(2 * n);
    ps.adv_reward.resize(2 * n);
    ps.adv_cost.resize(2 * n);
    Eigen::MatrixXd means(kActDim, 2 * n);
    for (int i = 0; i < kNumAgents; ++i) {
      const AgentSamples& a = batch.agents[i];
      ps.obs.middleCols(i * n, n) = a.obs;
      ps.actions.middleCols(i * n, n) = a.actions;
      means.middleCols(i * n, n) = a.means;
      ps.behavior_logp.segment(i * n, n) = a.logp;
      ps.adv_reward.segment(i * n, n) = adv_r.advantages;
      ps.adv_cost.segment(i * n, n) = cost_scaled;
    }
    if (state.lagrange) {
      ps.lambda.resize(2 * n);
      for (int i = 0; i < kNumAgents; ++i) ps.lambda.segment(i * n, n).setConstant(lambda_of(i));
    }
    const AgentUpdateResult res = agent_update(state.policies[0], state.policy_opt[0], ps, means,
                                               batch.agents[0].log_std, 0.0, settings, state.rng);
    for (int i = 0; i < kNumAgents; ++i) {
      const Eigen::VectorXd weighted = res.ratio.segment(i * n, n).cwiseProduct(cost_raw);
      rep.l_cost[i] = segment_mean(weighted, 0, n);
      rep.kl[i] = res.kl;
    }
  }

  if (state.lagrange) {
    std::array<double, kNumAgents> lambdas{};
    for (int i = 0; i < kNumAgents; ++i) {
      auto& ag = state.lagrange->agents[i];
      ag.budget = i == 0 ? alloc->c_a : alloc->c_b;
      ag.residual = rep.l_cost[i] - ag.budget;
      if (!tc.freeze_multipliers) ag.lambda = lagrange_update(ag.lambda, tc.lagrange_rate, rep.l_cost[i], ag.budget);
      lambdas[i] = ag.lambda;
    }
    rep.lambda = lambdas;
  }

  const Eigen::MatrixXd critic_in = batch.critic_input();
  regress_critic(state.critics.reward, state.reward_critic_opt, critic_in, adv_r.returns, tc.epochs, tc.minibatch,
                 state.rng, "reward");
  regress_critic(state.critics.cost, state.cost_critic_opt, critic_in, adv_c.returns, tc.epochs, tc.minibatch,
                 state.rng, "cost");

  ++state.iteration;
  rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

namespace {

using nlohmann::json;

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void rng_from_string(std::mt19937_64& rng, const std::string& text) {
  std::istringstream is(text);
  is >> rng;
  if (!is) throw std::runtime_error("checkpoint: corrupt RNG state");
}

json adam_to_json(const AdamState& s) {
  return {{"rate", s.config.rate},
          {"beta1", s.config.beta1},
          {"beta2", s.config.beta2},
          {"epsilon", s.config.epsilon},
          {"step", s.step},
          {"m", s.first_moment},
          {"v", s.second_moment}};
}

AdamState adam_from_json(const json& j) {
  AdamState s;
  s.config.rate = j.at("rate").get<double>();
  s.config.beta1 = j.at("beta1").get<double>();
  s.config.beta2 = j.at("beta2").get<double>();
  s.config.epsilon = j.at("epsilon").get<double>();
  s.step = j.at("step").get<std::int64_t>();
  s.first_moment = j.at("m").get<std::vector<double>>();
  s.second_moment = j.at("v").get<std::vector<double>>();
  return s;
}

json net_to_json(const MlpShape& shape, const std::vector<double>& params) {
  return {{"sizes", shape.sizes}, {"params", params}};
}

void check_params(const MlpShape& shape, std::size_t extra, const std::vector<double>& params) {
  if (params.size() != shape.param_count() + extra) throw std::runtime_error("checkpoint: parameter count mismatch");
}

}  // namespace

void save_checkpoint(const TrainingState& s, const std::filesystem::path& path) {
  json j;
  j["format"] = "safemarl-checkpoint";
  j["version"] = 1;
  j["config"] = serialize_config(s.config);
  j["seed"] = s.seed;
  j["iteration"] = s.iteration;
  j["mode"] = to_string(s.config.trainer.mode);
  j["shared"] = s.shared();
  json policies = json::array();
  json opts = json::array();
  for (int i = 0; i < kNumAgents; ++i) {
    const std::size_t k = s.shared() ? 0 : static_cast<std::size_t>(i);
    policies.push_back(net_to_json(s.policies[k].trunk, s.policies[k].params));
    opts.push_back(adam_to_json(s.policy_opt[k]));
  }
  j["policies"] = policies;
  j["policy_opt"] = opts;
  j["critics"] = {{"reward", net_to_json(s.critics.reward.shape, s.critics.reward.params)},
                  {"cost", net_to_json(s.critics.cost.shape, s.critics.cost.params)},
                  {"reward_opt", adam_to_json(s.reward_critic_opt)},
                  {"cost_opt", adam_to_json(s.cost_critic_opt)}};
  if (s.lagrange) {
    json agents = json::array();
    for (const auto& a : s.lagrange->agents) {
      agents.push_back({{"lambda", a.lambda}, {"budget", a.budget}, {"residual", a.residual}});
    }
    j["lagrange"] = agents;
  } else {
    j["lagrange"] = nullptr;
  }
  if (s.allocator) {
    json window = json::array();
    for (const auto& e : s.allocator->window().entries()) window.push_back({e.beta, e.y});
    j["allocator"] = {{"window", window},
                      {"decisions", s.allocator->decisions()},
                      {"has_previous", s.allocator->has_previous()},
                      {"previous_beta", s.allocator->previous_beta()},
                      {"last_objective", s.allocator->last_objective()},
                      {"rng", rng_to_string(s.allocator->rng())}};
  } else {
    j["allocator"] = nullptr;
  }
  j["rng"] = rng_to_string(s.rng);
  j["env_seed_base"] = s.env_seed_base;
  j["last_j"] = {s.last_j_reward, s.last_j_cost};

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp.string());
    out << j.dump(1) << '\n';
    if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TrainingState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint: malformed JSON in " + path.string() + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "safemarl-checkpoint" || j.at("version").get<int>() != 1) {
      throw std::runtime_error("checkpoint: unsupported format in " + path.string());
    }
    TrainingState s;
    s.config = parse_config_text(j.at("config").get<std::string>());
    s.seed = j.at("seed").get<std::uint64_t>();
    s.iteration = j.at("iteration").get<int>();
    const bool shared = j.at("shared").get<bool>();
    const int n_policies = shared ? 1 : kNumAgents;
    for (int i = 0; i < n_policies; ++i) {
      const json& p = j.at("policies").at(static_cast<std::size_t>(i));
      GaussianPolicy pol;
      pol.trunk.sizes = p.at("sizes").get<std::vector<int>>();
      pol.params = p.at("params").get<std::vector<double>>();
      check_params(pol.trunk, static_cast<std::size_t>(pol.trunk.output_dim()), pol.params);
      s.policies.push_back(std::move(pol));
      s.policy_opt.push_back(adam_from_json(j.at("policy_opt").at(static_cast<std::size_t>(i))));
    }
    const json& c = j.at("critics");
    for (auto [critic, key] : {std::pair{&s.critics.reward, "reward"}, std::pair{&s.critics.cost, "cost"}}) {
      critic->shape.sizes = c.at(key).at("sizes").get<std::vector<int>>();
      critic->params = c.at(key).at("params").get<std::vector<double>>();
      check_params(critic->shape, 0, critic->params);
    }
    s.reward_critic_opt = adam_from_json(c.at("reward_opt"));
    s.cost_critic_opt = adam_from_json(c.at("cost_opt"));
    if (!j.at("lagrange").is_null()) {
      LagrangeState l;
      for (int i = 0; i < kNumAgents; ++i) {
        const json& a = j.at("lagrange").at(static_cast<std::size_t>(i));
        l.agents[i] = {a.at("lambda").get<double>(), a.at("budget").get<double>(), a.at("residual").get<double>()};
      }
      s.lagrange = l;
    }
    if (!j.at("allocator").is_null()) {
      const json& a = j.at("allocator");
      s.allocator.emplace(s.config.allocator, 0);
      for (const auto& e : a.at("window")) s.allocator->window().push_observation(e.at(0).get<double>(), e.at(1).get<double>());
      s.allocator->restore(a.at("decisions").get<int>(), a.at("has_previous").get<bool>(),
                           a.at("previous_beta").get<double>(), a.at("last_objective").get<double>());
      rng_from_string(s.allocator->rng(), a.at("rng").get<std::string>());
    }
    rng_from_string(s.rng, j.at("rng").get<std::string>());
    s.env_seed_base = j.at("env_seed_base").get<std::uint64_t>();
    s.last_j_reward = j.at("last_j").at(0).get<double>();
    s.last_j_cost = j.at("last_j").at(1).get<double>();
    return s;
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint: missing or mistyped field in " + path.string() + ": " + e.what());
  }
}

TrainResult train(const Config& config, std::uint64_t seed, const TrainOptions& options) {
  TrainResult result{init_training(config, seed), {}};
  TrainingState& state = result.state;
  const TransportEnv env = make_env(config.env);

  std::ofstream report;
  std::ofstream allocation;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    std::ofstream cfg(*options.out_dir / "config.txt", std::ios::trunc);
    cfg << serialize_config(config);
    report.open(*options.out_dir / "report.csv", std::ios::trunc);
    allocation.open(*options.out_dir / "allocation.csv", std::ios::trunc);
    if (!report || !allocation) throw std::runtime_error("train: cannot write into " + options.out_dir->string());
    write_report_header(report);
    write_allocation_header(allocation);
  }

  const int every = config.trainer.checkpoint_every;
  for (int it = 0; it < config.trainer.iterations; ++it) {
    IterationReport rep;
    try {
      rep = train_iteration(state, env);
    } catch (const NumericalError&) {
      if (options.out_dir) save_checkpoint(state, *options.out_dir / "diagnostic_checkpoint.json");
      throw;
    }
    if (options.out_dir) {
      write_report_row(report, rep);
      write_allocation_row(allocation, rep);
      report.flush();
      allocation.flush();
      if (every > 0 && state.iteration % every == 0) save_checkpoint(state, *options.out_dir / "checkpoint.json");
    }
    if (options.on_iteration) options.on_iteration(rep);
    result.reports.push_back(rep);
  }
  if (options.out_dir) save_checkpoint(state, *options.out_dir / "checkpoint.json");
  return result;
}

}  // namespace safemarl
