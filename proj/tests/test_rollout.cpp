#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "safemarl/rollout.hpp"
#include "safemarl/scenario.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace safemarl;

namespace {

// A synthetic batch with the episode structure given per env as a list of episode lengths
// and which of them end by arrival.
struct Layout {
  std::vector<int> lengths;
  std::vector<bool> arrive;
};

RolloutBatch synthetic_batch(const std::vector<Layout>& envs, int horizon, double gamma, double lam,
                             std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  RolloutBatch b;
  b.n_envs = static_cast<int>(envs.size());
  b.horizon = horizon;
  b.gamma = gamma;
  b.gae_lambda = lam;
  const Eigen::Index n = b.size();
  for (auto& a : b.agents) {
    a.obs = Eigen::MatrixXd::Zero(kObsDim, n);
    a.actions = Eigen::MatrixXd::Zero(kActDim, n);
    a.means = Eigen::MatrixXd::Zero(kActDim, n);
    a.log_std = Eigen::VectorXd::Zero(kActDim);
    a.logp = Eigen::VectorXd::Zero(n);
  }
  b.reward = Eigen::VectorXd::NullaryExpr(n, [&] { return normal(rng); });
  b.cost = Eigen::VectorXd::NullaryExpr(n, [&] { return std::abs(normal(rng)); });
  b.value_reward = Eigen::VectorXd::NullaryExpr(n, [&] { return normal(rng); });
  b.value_cost = Eigen::VectorXd::NullaryExpr(n, [&] { return normal(rng); });
  b.next_value_reward = Eigen::VectorXd::NullaryExpr(n, [&] { return normal(rng); });
  b.next_value_cost = Eigen::VectorXd::NullaryExpr(n, [&] { return normal(rng); });
  b.terminal.assign(static_cast<std::size_t>(n), 0);
  b.episode_end.assign(static_cast<std::size_t>(n), 0);
  b.episode_step.assign(static_cast<std::size_t>(n), 0);
  b.collided.assign(static_cast<std::size_t>(n), 0);
  for (int e = 0; e < b.n_envs; ++e) {
    int t = 0;
    for (std::size_t k = 0; k < envs[e].lengths.size() && t < horizon; ++k) {
      for (int s = 0; s < envs[e].lengths[k] && t < horizon; ++s, ++t) {
        const Eigen::Index idx = b.index(e, t);
        b.episode_step[idx] = s;
        if (s + 1 == envs[e].lengths[k]) {
          b.episode_end[idx] = 1;
          b.terminal[idx] = envs[e].arrive[k] ? 1 : 0;
        }
      }
    }
    // Within an episode the successor estimate is the next stored value.
    for (int t = 0; t + 1 < horizon; ++t) {
      const Eigen::Index idx = b.index(e, t);
      if (b.episode_end[idx]) continue;
      b.next_value_reward(idx) = b.value_reward(idx + 1);
      b.next_value_cost(idx) = b.value_cost(idx + 1);
    }
  }
  return b;
}

// Direct-sum oracle: A_t = sum_k (gamma lambda)^k delta_{t+k} within the segment that
// ends at an episode boundary or the horizon.
Eigen::VectorXd direct_sum_gae(const RolloutBatch& b, const Eigen::VectorXd& x, const Eigen::VectorXd& v,
                               const Eigen::VectorXd& nv) {
  Eigen::VectorXd out(b.size());
  for (int e = 0; e < b.n_envs; ++e) {
    for (int t = 0; t < b.horizon; ++t) {
      double sum = 0.0;
      double w = 1.0;
      for (int k = t; k < b.horizon; ++k) {
        const Eigen::Index idx = b.index(e, k);
        const double boot = b.terminal[idx] ? 0.0 : nv(idx);
        sum += w * (x(idx) + b.gamma * boot - v(idx));
        if (b.episode_end[idx]) break;
        w *= b.gamma * b.gae_lambda;
      }
      out(b.index(e, t)) = sum;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("gae: single terminal step") {
  std::mt19937_64 rng(1);
  RolloutBatch b = synthetic_batch({{{1}, {true}}}, 1, 0.99, 0.95, rng);
  b.reward(0) = 1.0;
  b.value_reward(0) = 0.0;
  b.next_value_reward(0) = 123.0;
  const AdvantageSet a = gae(b, Stream::reward);
  CHECK(a.advantages(0) == 1.0);
  CHECK(a.returns(0) == 1.0);
}

TEST_CASE("gae: lambda 0 is one-step TD") {
  std::mt19937_64 rng(2);
  const RolloutBatch b = synthetic_batch({{{3, 4}, {false, true}}, {{7}, {true}}}, 7, 0.97, 0.0, rng);
  const AdvantageSet a = gae(b, Stream::cost);
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    const double boot = b.terminal[i] ? 0.0 : b.next_value_cost(i);
    CHECK(a.advantages(i) == doctest::Approx(b.cost(i) + 0.97 * boot - b.value_cost(i)).epsilon(1e-15));
  }
}

TEST_CASE("gae: lambda 1 on a full episode equals return-to-go minus value") {
  std::mt19937_64 rng(3);
  const RolloutBatch b = synthetic_batch({{{9}, {true}}}, 9, 0.9, 1.0, rng);
  const AdvantageSet a = gae(b, Stream::reward);
  for (int t = 0; t < 9; ++t) {
    double g = 0.0;
    double w = 1.0;
    for (int k = t; k < 9; ++k) {
      g += w * b.reward(k);
      w *= 0.9;
    }
    CHECK(std::abs(a.advantages(t) - (g - b.value_reward(t))) <= 1e-12);
  }
}

TEST_CASE("property: gae matches the direct-sum oracle on random layouts") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> envs(1, 4);
  std::uniform_int_distribution<int> horizon(1, 30);
  std::uniform_int_distribution<int> len(1, 12);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = horizon(rng);
    std::vector<Layout> layout(static_cast<std::size_t>(envs(rng)));
    for (auto& l : layout) {
      int total = 0;
      while (total < h) {
        l.lengths.push_back(len(rng));
        l.arrive.push_back(coin(rng));
        total += l.lengths.back();
      }
    }
    const RolloutBatch b = synthetic_batch(layout, h, 0.5 + 0.49 * unit(rng), unit(rng), rng);
    for (Stream s : {Stream::reward, Stream::cost}) {
      const AdvantageSet a = gae(b, s);
      const Eigen::VectorXd ref = s == Stream::reward
                                      ? direct_sum_gae(b, b.reward, b.value_reward, b.next_value_reward)
                                      : direct_sum_gae(b, b.cost, b.value_cost, b.next_value_cost);
      CHECK((a.advantages - ref).cwiseAbs().maxCoeff() <= 1e-12);
      const Eigen::VectorXd& v = s == Stream::reward ? b.value_reward : b.value_cost;
      CHECK((a.returns - a.advantages - v).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("normalize gives zero mean and unit variance, constant input left centered") {
  AdvantageSet a;
  a.advantages = Eigen::VectorXd::LinSpaced(11, -3.0, 7.0);
  normalize(a);
  CHECK(std::abs(a.advantages.mean()) <= 1e-14);
  CHECK(a.advantages.squaredNorm() / 11.0 == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(a.mean == doctest::Approx(2.0));
  AdvantageSet c;
  c.advantages = Eigen::VectorXd::Constant(5, 4.0);
  normalize(c);
  CHECK(c.advantages.cwiseAbs().maxCoeff() == 0.0);
  CHECK(c.std == 1.0);
}

TEST_CASE("empirical_J examples") {
  std::mt19937_64 rng(5);
  RolloutBatch b = synthetic_batch({{{4, 2}, {true, false}}}, 6, 0.9, 0.95, rng);
  b.reward.setZero();
  b.reward(0) = 1.0;
  b.reward(4) = 1.0;
  CHECK(completed_episodes(b) == 2);
  // Episode 1 contributes 1, episode 2 contributes 1 at its first step.
  CHECK(empirical_J(b, Stream::reward, 0.9) == doctest::Approx(1.0));
  b.reward.setZero();
  CHECK(empirical_J(b, Stream::reward, 0.9) == 0.0);

  // Discounting is relative to each episode's start.
  b.cost.setZero();
  b.cost(3) = 2.0;
  CHECK(empirical_J(b, Stream::cost, 0.9) == doctest::Approx(2.0 * 0.729 / 2.0));

  // An episode cut by the horizon is excluded.
  RolloutBatch open = synthetic_batch({{{3, 10}, {false, false}}}, 6, 0.9, 0.95, rng);
  CHECK(completed_episodes(open) == 1);
  RolloutBatch none = synthetic_batch({{{10}, {false}}}, 6, 0.9, 0.95, rng);
  CHECK(completed_episodes(none) == 0);
  CHECK_THROWS_AS(empirical_J(none, Stream::reward, 0.9), std::runtime_error);
}

TEST_CASE("batch save and load round trip") {
  std::mt19937_64 rng(6);
  const RolloutBatch b = synthetic_batch({{{2, 3}, {true, false}}, {{5}, {true}}}, 5, 0.99, 0.95, rng);
  std::stringstream ss;
  save_batch(b, ss);
  const RolloutBatch c = load_batch(ss);
  CHECK(c.n_envs == b.n_envs);
  CHECK(c.horizon == b.horizon);
  CHECK(c.reward == b.reward);
  CHECK(c.cost == b.cost);
  CHECK(c.value_cost == b.value_cost);
  CHECK(c.next_value_reward == b.next_value_reward);
  CHECK(c.terminal == b.terminal);
  CHECK(c.episode_end == b.episode_end);
  CHECK(c.episode_step == b.episode_step);
  std::stringstream junk("not a batch");
  CHECK_THROWS(load_batch(junk));
}

TEST_CASE("collector: shapes, determinism, and behaviour log-probabilities") {
  const TransportEnv env(make_scenario(ScenarioKind::gate, ScenarioParams{}), EnvParams{});
  const GaussianPolicy pa = GaussianPolicy::create(kObsDim, 16, kActDim, -0.5, 1);
  const GaussianPolicy pb = GaussianPolicy::create(kObsDim, 16, kActDim, -0.5, 2);
  const CriticPair critics{Critic::create(2 * kObsDim, 16, 3), Critic::create(2 * kObsDim, 16, 4)};

  RolloutCollector one(env, 1, 9);
  std::mt19937_64 rng(1);
  const RolloutBatch single = one.collect({&pa, &pb}, critics, 1, 0.99, 0.95, rng);
  CHECK(single.size() == 1);
  CHECK_NOTHROW(single.validate());

  auto run = [&] {
    RolloutCollector c(env, 3, 11);
    std::mt19937_64 r(5);
    return c.collect({&pa, &pb}, critics, 40, 0.99, 0.95, r);
  };
  const RolloutBatch a = run();
  const RolloutBatch b = run();
  CHECK(a.size() == 120);
  CHECK(a.reward == b.reward);
  CHECK(a.cost == b.cost);
  CHECK(a.agents[0].actions == b.agents[0].actions);
  CHECK(a.agents[1].logp == b.agents[1].logp);
  CHECK(a.critic_input().rows() == 2 * kObsDim);

  for (int i = 0; i < kNumAgents; ++i) {
    const auto& s = a.agents[i];
    for (Eigen::Index k = 0; k < a.size(); k += 7) {
      std::vector<double> mean(kActDim);
      std::vector<double> sd(kActDim);
      std::vector<double> act(kActDim);
      for (int d = 0; d < kActDim; ++d) {
        mean[d] = s.means(d, k);
        sd[d] = std::exp(s.log_std(d));
        act[d] = s.actions(d, k);
      }
      CHECK(s.logp(k) == doctest::Approx(log_prob(mean, sd, act)).epsilon(1e-12));
    }
  }
  // Value estimates come from the critics on the stored inputs.
  const Eigen::VectorXd v = forward_critic(critics.reward, a.critic_input());
  CHECK((v - a.value_reward).cwiseAbs().maxCoeff() <= 1e-12);
  // Within an env, step indices advance by one until an episode ends.
  for (int e = 0; e < a.n_envs; ++e) {
    for (int t = 1; t < a.horizon; ++t) {
      const auto prev = a.index(e, t - 1);
      const auto cur = a.index(e, t);
      CHECK(a.episode_step[cur] == (a.episode_end[prev] ? 0 : a.episode_step[prev] + 1));
      if (!a.episode_end[prev]) CHECK(a.next_value_reward(prev) == a.value_reward(cur));
    }
  }

  CHECK_THROWS(RolloutCollector(env, 0, 1));
  RolloutCollector bad(env, 1, 1);
  std::mt19937_64 r(1);
  CHECK_THROWS(bad.collect({&pa, &pb}, critics, 0, 0.99, 0.95, r));
}
