#include "safemarl/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace safemarl {

Eigen::MatrixXd RolloutBatch::critic_input() const {
  Eigen::MatrixXd input(2 * kObsDim, size());
  input.topRows(kObsDim) = agents[0].obs;
  input.bottomRows(kObsDim) = agents[1].obs;
  return input;
}

void RolloutBatch::validate() const {
  const Eigen::Index n = size();
  auto check = [n](Eigen::Index got, const char* what) {
    if (got != n) throw std::invalid_argument(std::string("rollout batch: ") + what + " has the wrong length");
  };
  for (const auto& a : agents) {
    check(a.obs.cols(), "obs");
    check(a.actions.cols(), "actions");
    check(a.means.cols(), "means");
    check(a.logp.size(), "logp");
    if (!a.logp.allFinite()) throw std::invalid_argument("rollout batch: non-finite log-probability");
  }
  check(reward.size(), "reward");
  check(cost.size(), "cost");
  check(value_reward.size(), "value_reward");
  check(value_cost.size(), "value_cost");
  check(next_value_reward.size(), "next_value_reward");
  check(next_value_cost.size(), "next_value_cost");
  check(static_cast<Eigen::Index>(terminal.size()), "terminal");
  check(static_cast<Eigen::Index>(episode_end.size()), "episode_end");
  check(static_cast<Eigen::Index>(episode_step.size()), "episode_step");
}

Eigen::VectorXd critic_features(const ObservationPair& obs) {
  Eigen::VectorXd x(2 * kObsDim);
  for (int k = 0; k < kObsDim; ++k) {
    x(k) = obs[0][k];
    x(kObsDim + k) = obs[1][k];
  }
  return x;
}

RolloutCollector::RolloutCollector(TransportEnv env, int n_envs, std::uint64_t seed) : env_(std::move(env)) {
  if (n_envs < 1) throw std::invalid_argument("collector: n_envs must be >= 1");
  std::uint64_t s = seed;
  states_.reserve(static_cast<std::size_t>(n_envs));
  for (int e = 0; e < n_envs; ++e) {
    s = next_episode_seed(s);
    states_.push_back(env_.reset(s));
  }
}

void RolloutCollector::set_states(std::vector<EnvState> states) {
  if (states.size() != states_.size()) throw std::invalid_argument("collector: state count mismatch");
  states_ = std::move(states);
}

RolloutBatch RolloutCollector::collect(const std::array<const GaussianPolicy*, kNumAgents>& policies,
                                       const CriticPair& critics, int horizon, double gamma, double gae_lambda,
                                       std::mt19937_64& rng) {
  if (horizon < 1) throw std::invalid_argument("collect: horizon must be >= 1");
  const int n_envs = static_cast<int>(states_.size());
  RolloutBatch batch;
  batch.n_envs = n_envs;
  batch.horizon = horizon;
  batch.gamma = gamma;
  batch.gae_lambda = gae_lambda;
  const Eigen::Index n = batch.size();
  for (int i = 0; i < kNumAgents; ++i) {
    auto& a = batch.agents[i];
    a.obs.resize(kObsDim, n);
    a.actions.resize(kActDim, n);
    a.means.resize(kActDim, n);
    a.logp.resize(n);
    const auto ls = policies[i]->log_std();
    a.log_std.resize(kActDim);
    for (int k = 0; k < kActDim; ++k) a.log_std(k) = std::clamp(ls[k], kMinLogStd, kMaxLogStd);
  }
  batch.reward.resize(n);
  batch.cost.resize(n);
  batch.value_reward.resize(n);
  batch.value_cost.resize(n);
  batch.next_value_reward.setZero(n);
  batch.next_value_cost.setZero(n);
  batch.terminal.assign(static_cast<std::size_t>(n), 0);
  batch.episode_end.assign(static_cast<std::size_t>(n), 0);
  batch.episode_step.assign(static_cast<std::size_t>(n), 0);
  batch.collided.assign(static_cast<std::size_t>(n), 0);

  std::normal_distribution<double> normal(0.0, 1.0);
  // Successor observations of timed-out steps, bootstrapped after the loop.
  std::vector<Eigen::Index> timeout_index;
  std::vector<Eigen::VectorXd> timeout_features;

  std::array<Eigen::MatrixXd, kNumAgents> obs;
  Eigen::MatrixXd features(2 * kObsDim, n_envs);
  std::vector<ActionPair> actions(static_cast<std::size_t>(n_envs));
  for (int t = 0; t < horizon; ++t) {
    for (auto& m : obs) m.resize(kObsDim, n_envs);
    for (int e = 0; e < n_envs; ++e) {
      const auto pair = env_.observe(states_[e]);
      for (int i = 0; i < kNumAgents; ++i) {
        for (int k = 0; k < kObsDim; ++k) obs[i](k, e) = pair[i][k];
      }
      features.col(e) = critic_features(pair);
    }
    const Eigen::VectorXd v_r = forward_critic(critics.reward, features);
    const Eigen::VectorXd v_c = forward_critic(critics.cost, features);
    std::array<GaussianBatch, kNumAgents> dist;
    for (int i = 0; i < kNumAgents; ++i) dist[i] = forward_policy(*policies[i], obs[i]);

    for (int e = 0; e < n_envs; ++e) {
      const Eigen::Index idx = batch.index(e, t);
      for (int i = 0; i < kNumAgents; ++i) {
        auto& a = batch.agents[i];
        std::array<double, kActDim> act{};
        std::array<double, kActDim> mean{};
        std::array<double, kActDim> sd{};
        for (int k = 0; k < kActDim; ++k) {
          mean[k] = dist[i].mean(k, e);
          sd[k] = dist[i].std(k);
          act[k] = mean[k] + sd[k] * normal(rng);
          a.actions(k, idx) = act[k];
          a.means(k, idx) = mean[k];
        }
        a.obs.col(idx) = obs[i].col(e);
        a.logp(idx) = log_prob(mean, sd, act);
        actions[e][i] = command_from(act);
      }
      batch.value_reward(idx) = v_r(e);
      batch.value_cost(idx) = v_c(e);
      batch.episode_step[idx] = states_[e].step_index;
    }

    auto [next, outcomes] = env_.batch_step(states_, actions);
    for (int e = 0; e < n_envs; ++e) {
      const Eigen::Index idx = batch.index(e, t);
      const auto& o = outcomes[e];
      batch.reward(idx) = o.reward;
      batch.cost(idx) = o.cost;
      batch.terminal[idx] = o.arrived ? 1 : 0;
      batch.episode_end[idx] = (o.arrived || o.timed_out) ? 1 : 0;
      batch.collided[idx] = o.collided ? 1 : 0;
      if (o.timed_out) {
        timeout_index.push_back(idx);
        timeout_features.push_back(critic_features(o.observations));
      }
    }
    states_ = std::move(next);
  }

  // Successor values: the next stored sample within an episode, the live state
  // at the batch boundary, or the final observation of a timed-out episode.
  Eigen::MatrixXd tail(2 * kObsDim, n_envs);
  for (int e = 0; e < n_envs; ++e) tail.col(e) = critic_features(env_.observe(states_[e]));
  const Eigen::VectorXd tail_r = forward_critic(critics.reward, tail);
  const Eigen::VectorXd tail_c = forward_critic(critics.cost, tail);
  for (int e = 0; e < n_envs; ++e) {
    for (int t = 0; t < horizon; ++t) {
      const Eigen::Index idx = batch.index(e, t);
      if (batch.episode_end[idx]) continue;
      if (t + 1 < horizon) {
        batch.next_value_reward(idx) = batch.value_reward(idx + 1);
        batch.next_value_cost(idx) = batch.value_cost(idx + 1);
      } else {
        batch.next_value_reward(idx) = tail_r(e);
        batch.next_value_cost(idx) = tail_c(e);
      }
    }
  }
  if (!timeout_index.empty()) {
    Eigen::MatrixXd tf(2 * kObsDim, static_cast<Eigen::Index>(timeout_index.size()));
    for (std::size_t j = 0; j < timeout_index.size(); ++j) tf.col(static_cast<Eigen::Index>(j)) = timeout_features[j];
    const Eigen::VectorXd r = forward_critic(critics.reward, tf);
    const Eigen::VectorXd c = forward_critic(critics.cost, tf);
    for (std::size_t j = 0; j < timeout_index.size(); ++j) {
      batch.next_value_reward(timeout_index[j]) = r(static_cast<Eigen::Index>(j));
      batch.next_value_cost(timeout_index[j]) = c(static_cast<Eigen::Index>(j));
    }
  }
  return batch;
}

AdvantageSet gae(const RolloutBatch& batch, std::span<const double> signal, const Eigen::VectorXd& values,
                 const Eigen::VectorXd& next_values) {
  const Eigen::Index n = batch.size();
  if (static_cast<Eigen::Index>(signal.size()) != n || values.size() != n || next_values.size() != n) {
    throw std::invalid_argument("gae: array lengths disagree with the batch");
  }
  AdvantageSet out;
  out.advantages.resize(n);
  const double g = batch.gamma;
  const double gl = batch.gamma * batch.gae_lambda;
  for (int e = 0; e < batch.n_envs; ++e) {
    double running = 0.0;
    for (int t = batch.horizon - 1; t >= 0; --t) {
      const Eigen::Index idx = batch.index(e, t);
      const double bootstrap = batch.terminal[idx] ? 0.0 : next_values(idx);
      const double delta = signal[idx] + g * bootstrap - values(idx);
      const bool boundary = batch.episode_end[idx] || t + 1 == batch.horizon;
      running = delta + (boundary ? 0.0 : gl * running);
      out.advantages(idx) = running;
    }
  }
  out.returns = out.advantages + values;
  return out;
}

AdvantageSet gae(const RolloutBatch& batch, Stream stream) {
  if (stream == Stream::reward) {
    return gae(batch, std::span<const double>(batch.reward.data(), batch.reward.size()), batch.value_reward,
               batch.next_value_reward);
  }
  return gae(batch, std::span<const double>(batch.cost.data(), batch.cost.size()), batch.value_cost,
             batch.next_value_cost);
}

void normalize(AdvantageSet& set) {
  const Eigen::Index n = set.advantages.size();
  if (n == 0) return;
  const double mean = set.advantages.mean();
  const double var = (set.advantages.array() - mean).square().sum() / static_cast<double>(n);
  const double sd = std::sqrt(var);
  set.mean = mean;
  set.std = sd > 1e-12 ? sd : 1.0;
  set.advantages = (set.advantages.array() - mean) / set.std;
  set.normalized = true;
}

namespace {

template <typename Visit>
void for_each_completed_episode(const RolloutBatch& batch, Visit&& visit) {
  for (int e = 0; e < batch.n_envs; ++e) {
    int start = -1;
    for (int t = 0; t < batch.horizon; ++t) {
      const Eigen::Index idx = batch.index(e, t);
      if (batch.episode_step[idx] == 0) start = t;
      if (batch.episode_end[idx]) {
        if (start >= 0) visit(e, start, t);
        start = -1;
      }
    }
  }
}

}  // namespace

int completed_episodes(const RolloutBatch& batch) {
  int count = 0;
  for_each_completed_episode(batch, [&](int, int, int) { ++count; });
  return count;
}

double empirical_J(const RolloutBatch& batch, std::span<const double> signal, double gamma) {
  if (static_cast<Eigen::Index>(signal.size()) != batch.size()) throw std::invalid_argument("empirical_J: bad signal length");
  double total = 0.0;
  int count = 0;
  for_each_completed_episode(batch, [&](int e, int start, int end) {
    double discount = 1.0;
    double sum = 0.0;
    for (int t = start; t <= end; ++t) {
      sum += discount * signal[batch.index(e, t)];
      discount *= gamma;
    }
    total += sum;
    ++count;
  });
  if (count == 0) throw std::runtime_error("empirical_J: batch contains no completed episode");
  return total / count;
}

double empirical_J(const RolloutBatch& batch, Stream stream, double gamma) {
  const auto& v = stream == Stream::reward ? batch.reward : batch.cost;
  return empirical_J(batch, std::span<const double>(v.data(), v.size()), gamma);
}

namespace {

constexpr char kBatchMagic[4] = {'S', 'M', 'R', 'B'};
constexpr std::uint32_t kBatchVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("load_batch: truncated input");
  return v;
}

void put_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  put<std::int64_t>(out, m.rows());
  put<std::int64_t>(out, m.cols());
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}

Eigen::MatrixXd get_matrix(std::istream& in) {
  const auto rows = get<std::int64_t>(in);
  const auto cols = get<std::int64_t>(in);
  if (rows < 0 || cols < 0 || rows * cols > (std::int64_t{1} << 32)) throw std::runtime_error("load_batch: bad shape");
  Eigen::MatrixXd m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in) throw std::runtime_error("load_batch: truncated input");
  return m;
}

template <typename T>
void put_bytes(std::ostream& out, const std::vector<T>& v) {
  put<std::int64_t>(out, static_cast<std::int64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(sizeof(T) * v.size()));
}

template <typename T>
std::vector<T> get_bytes(std::istream& in) {
  const auto n = get<std::int64_t>(in);
  if (n < 0 || n > (std::int64_t{1} << 32)) throw std::runtime_error("load_batch: bad length");
  std::vector<T> v(static_cast<std::size_t>(n));
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(sizeof(T) * v.size()));
  if (!in) throw std::runtime_error("load_batch: truncated input");
  return v;
}

}  // namespace

void save_batch(const RolloutBatch& batch, std::ostream& out) {
  out.write(kBatchMagic, 4);
  put(out, kBatchVersion);
  put<std::int32_t>(out, batch.n_envs);
  put<std::int32_t>(out, batch.horizon);
  put(out, batch.gamma);
  put(out, batch.gae_lambda);
  for (const auto& a : batch.agents) {
    put_matrix(out, a.obs);
    put_matrix(out, a.actions);
    put_matrix(out, a.means);
    put_matrix(out, a.log_std);
    put_matrix(out, a.logp);
  }
  for (const auto* v : {&batch.reward, &batch.cost, &batch.value_reward, &batch.value_cost, &batch.next_value_reward,
                        &batch.next_value_cost}) {
    put_matrix(out, *v);
  }
  put_bytes(out, batch.terminal);
  put_bytes(out, batch.episode_end);
  put_bytes(out, batch.episode_step);
  put_bytes(out, batch.collided);
}

RolloutBatch load_batch(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kBatchMagic, 4) != 0) throw std::runtime_error("load_batch: not a rollout batch");
  if (get<std::uint32_t>(in) != kBatchVersion) throw std::runtime_error("load_batch: unsupported version");
  RolloutBatch batch;
  batch.n_envs = get<std::int32_t>(in);
  batch.horizon = get<std::int32_t>(in);
  batch.gamma = get<double>(in);
  batch.gae_lambda = get<double>(in);
  for (auto& a : batch.agents) {
    a.obs = get_matrix(in);
    a.actions = get_matrix(in);
    a.means = get_matrix(in);
    a.log_std = get_matrix(in);
    a.logp = get_matrix(in);
  }
  for (auto* v : {&batch.reward, &batch.cost, &batch.value_reward, &batch.value_cost, &batch.next_value_reward,
                  &batch.next_value_cost}) {
    *v = get_matrix(in);
  }
  batch.terminal = get_bytes<std::uint8_t>(in);
  batch.episode_end = get_bytes<std::uint8_t>(in);
  batch.episode_step = get_bytes<int>(in);
  batch.collided = get_bytes<std::uint8_t>(in);
  batch.validate();
  return batch;
}

}  // namespace safemarl
