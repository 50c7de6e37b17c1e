#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "safemarl/tabular_oracle.hpp"
#include "safemarl/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace safemarl;
namespace fs = std::filesystem;

namespace {

Config small_config(TrainMode mode, int iterations) {
  Config c;
  c.trainer.mode = mode;
  c.trainer.iterations = iterations;
  c.trainer.n_envs = 2;
  c.trainer.horizon = 40;
  c.trainer.minibatch = 32;
  c.trainer.checkpoint_every = 2;
  c.policy.hidden = 16;
  c.allocator.cold_start = 1;
  c.env.scenario.episode_cap = 15;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("safemarl_trainer_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_same_reports(const std::vector<IterationReport>& a, const std::vector<IterationReport>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].iter == b[i].iter);
    CHECK(a[i].j_reward == b[i].j_reward);
    CHECK(a[i].j_cost == b[i].j_cost);
    CHECK(a[i].d == b[i].d);
    CHECK(a[i].beta == b[i].beta);
    CHECK(a[i].c_a == b[i].c_a);
    CHECK(a[i].c_b == b[i].c_b);
    CHECK(a[i].lambda == b[i].lambda);
    CHECK(a[i].l_cost == b[i].l_cost);
    CHECK(a[i].kl == b[i].kl);
    CHECK(a[i].order == b[i].order);
  }
}

PolicySamples random_samples(const GaussianPolicy& policy, int n, std::mt19937_64& rng, Eigen::MatrixXd& means,
                             Eigen::VectorXd& log_std) {
  std::normal_distribution<double> normal(0.0, 1.0);
  PolicySamples s;
  s.obs = Eigen::MatrixXd::NullaryExpr(kObsDim, n, [&] { return normal(rng); });
  const GaussianBatch dist = forward_policy(policy, s.obs);
  means = dist.mean;
  log_std = dist.std.array().log();
  s.actions = dist.mean + dist.std.asDiagonal() * Eigen::MatrixXd::NullaryExpr(kActDim, n, [&] { return normal(rng); });
  s.behavior_logp.resize(n);
  for (int i = 0; i < n; ++i) {
    std::vector<double> m(dist.mean.col(i).data(), dist.mean.col(i).data() + kActDim);
    std::vector<double> sd(dist.std.data(), dist.std.data() + kActDim);
    std::vector<double> a(s.actions.col(i).data(), s.actions.col(i).data() + kActDim);
    s.behavior_logp(i) = log_prob(m, sd, a);
  }
  s.adv_reward = Eigen::VectorXd::NullaryExpr(n, [&] { return normal(rng); });
  s.adv_cost = Eigen::VectorXd::NullaryExpr(n, [&] { return normal(rng); });
  return s;
}

}  // namespace

TEST_CASE("budget and multiplier arithmetic") {
  CHECK(compute_budget(2.0, 0.5) == 1.5);
  CHECK(compute_budget(0.7, 0.7) == 0.0);
  CHECK(compute_budget(1.0, 1.4) == doctest::Approx(-0.4).epsilon(1e-15));
  CHECK(lagrange_update(0.5, 0.1, 1.2, 1.0) == 0.52);
  CHECK(lagrange_update(0.05, 0.1, 0.0, 1.0) == 0.0);
  CHECK(lagrange_update(0.37, 0.1, 0.8, 0.8) == 0.37);
  CHECK_THROWS(lagrange_update(0.1, 0.0, 1.0, 1.0));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 10000; ++i) CHECK(lagrange_update(std::abs(u(rng)), 0.05, u(rng), u(rng)) >= 0.0);
}

TEST_CASE("update order is a fair, reproducible coin") {
  std::mt19937_64 rng(17);
  int first_a = 0;
  std::vector<int> firsts;
  for (int i = 0; i < 10000; ++i) {
    const auto o = sample_update_order(rng);
    CHECK(((o[0] == 0 && o[1] == 1) || (o[0] == 1 && o[1] == 0)));
    first_a += o[0] == 0 ? 1 : 0;
    firsts.push_back(o[0]);
  }
  const double frac = first_a / 10000.0;
  CHECK(frac >= 0.48);
  CHECK(frac <= 0.52);
  std::mt19937_64 again(17);
  for (int i = 0; i < 10000; ++i) CHECK(sample_update_order(again)[0] == firsts[static_cast<std::size_t>(i)]);
}

TEST_CASE("mode wiring table") {
  const ModeWiring full = apply_mode(TrainMode::full);
  CHECK((full.allocation && full.lagrangian && full.sequential && !full.shared_params && !full.penalty_in_reward));
  const ModeWiring uca = apply_mode(TrainMode::uca);
  CHECK((uca.uniform_split && !uca.allocation && uca.lagrangian && uca.sequential));
  const ModeWiring pen = apply_mode(TrainMode::penalty_only);
  CHECK((pen.penalty_in_reward && !pen.lagrangian && !pen.allocation && !pen.uniform_split));
  const ModeWiring shared = apply_mode(TrainMode::shared_params);
  CHECK((shared.shared_params && !shared.sequential && shared.penalty_in_reward));
  const ModeWiring macpo = apply_mode(TrainMode::macpo_style);
  CHECK((macpo.shared_params && macpo.allocation && macpo.lagrangian));
  CHECK_THROWS(train_mode_from_string("ippo"));
  CHECK(train_mode_from_string("penalty") == TrainMode::penalty_only);
  CHECK(train_mode_from_string("macpo_style") == TrainMode::macpo_style);
}

TEST_CASE("penalty wiring folds costs into the reward signal") {
  const Config c = small_config(TrainMode::penalty_only, 1);
  const TrainingState s = init_training(c, 4);
  const TransportEnv env = make_env(c.env);
  RolloutCollector col(env, 2, 1);
  col.set_states(iteration_start_states(env, s));
  std::mt19937_64 rng(2);
  const RolloutBatch b = col.collect({&s.policy(0), &s.policy(1)}, s.critics, 40, 0.99, 0.95, rng);
  const Eigen::VectorXd pen = reward_signal(b, apply_mode(TrainMode::penalty_only), 1.0);
  CHECK(pen == Eigen::VectorXd(b.reward - b.cost));
  const Eigen::VectorXd half = reward_signal(b, apply_mode(TrainMode::penalty_only), 0.5);
  CHECK(half == Eigen::VectorXd(b.reward - 0.5 * b.cost));
  CHECK(reward_signal(b, apply_mode(TrainMode::full), 1.0) == b.reward);
}

TEST_CASE("agent update: zero advantages leave parameters unchanged") {
  std::mt19937_64 rng(5);
  GaussianPolicy p = GaussianPolicy::create(kObsDim, 16, kActDim, -0.5, 1);
  Eigen::MatrixXd means;
  Eigen::VectorXd log_std;
  PolicySamples s = random_samples(p, 64, rng, means, log_std);
  s.adv_reward.setZero();
  s.adv_cost.setZero();
  const std::vector<double> before = p.params;
  AdamState opt = AdamState::create(p.params.size(), AdamConfig{});
  const AgentUpdateResult r = agent_update(p, opt, s, means, log_std, 0.7, UpdateSettings{0.2, 0.02, 4, 16}, rng);
  CHECK(p.params == before);
  CHECK(r.kl == 0.0);
  CHECK(r.accepted_epochs == 4);
  for (Eigen::Index i = 0; i < r.ratio.size(); ++i) CHECK(r.ratio(i) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("agent update: KL early stop never commits an epoch above the threshold") {
  std::mt19937_64 rng(6);
  for (double rate : {3e-4, 3e-3, 3e-2, 0.3}) {
    GaussianPolicy p = GaussianPolicy::create(kObsDim, 16, kActDim, -0.5, 2);
    Eigen::MatrixXd means;
    Eigen::VectorXd log_std;
    const PolicySamples s = random_samples(p, 128, rng, means, log_std);
    AdamState opt = AdamState::create(p.params.size(), AdamConfig{rate, 0.9, 0.999, 1e-8});
    const AgentUpdateResult r = agent_update(p, opt, s, means, log_std, 0.0, UpdateSettings{0.2, 0.02, 6, 32}, rng);
    CHECK(r.kl <= 0.02);
    if (r.early_stopped) CHECK(r.accepted_epochs < 6);
    // Recompute the mean KL of the returned policy from scratch.
    const GaussianBatch after = forward_policy(p, s.obs);
    double kl = 0.0;
    for (Eigen::Index i = 0; i < s.obs.cols(); ++i) {
      std::vector<double> m1(means.col(i).data(), means.col(i).data() + kActDim);
      std::vector<double> s1(kActDim);
      for (int k = 0; k < kActDim; ++k) s1[k] = std::exp(log_std(k));
      std::vector<double> m2(after.mean.col(i).data(), after.mean.col(i).data() + kActDim);
      std::vector<double> s2(after.std.data(), after.std.data() + kActDim);
      kl += kl_diag_gaussian(m1, s1, m2, s2);
    }
    kl /= static_cast<double>(s.obs.cols());
    CHECK(kl == doctest::Approx(r.kl).epsilon(1e-10));
    CHECK(kl <= 0.02);
  }
  // A large step rate must trip the early stop.
  GaussianPolicy p = GaussianPolicy::create(kObsDim, 16, kActDim, -0.5, 3);
  Eigen::MatrixXd means;
  Eigen::VectorXd log_std;
  const PolicySamples s = random_samples(p, 128, rng, means, log_std);
  AdamState opt = AdamState::create(p.params.size(), AdamConfig{0.5, 0.9, 0.999, 1e-8});
  const AgentUpdateResult r = agent_update(p, opt, s, means, log_std, 0.0, UpdateSettings{0.2, 0.02, 6, 32}, rng);
  CHECK(r.early_stopped);
}

TEST_CASE("lambda fixed at zero reproduces the pure clipped-surrogate run bitwise") {
  Config lag = small_config(TrainMode::full, 4);
  lag.trainer.freeze_multipliers = true;
  lag.trainer.lambda_init = 0.0;
  Config plain = small_config(TrainMode::penalty_only, 4);
  plain.trainer.penalty_coef = 0.0;
  const TrainResult a = train(lag, 21);
  const TrainResult b = train(plain, 21);
  REQUIRE(a.reports.size() == b.reports.size());
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    CHECK(a.reports[i].j_reward == b.reports[i].j_reward);
    CHECK(a.reports[i].j_cost == b.reports[i].j_cost);
    CHECK(a.reports[i].kl == b.reports[i].kl);
    CHECK(a.reports[i].l_cost == b.reports[i].l_cost);
    CHECK(a.reports[i].order == b.reports[i].order);
  }
  for (int i = 0; i < kNumAgents; ++i) CHECK(a.state.policy(i).params == b.state.policy(i).params);
  CHECK(a.state.critics.reward.params == b.state.critics.reward.params);
}

TEST_CASE("mode runs: budgets, multipliers, shared blocks, penalty state") {
  SUBCASE("full") {
    const TrainResult r = train(small_config(TrainMode::full, 5), 1);
    for (const auto& rep : r.reports) {
      REQUIRE(rep.c_a.has_value());
      CHECK(*rep.c_a + *rep.c_b == rep.d);
      REQUIRE(rep.lambda.has_value());
      for (double l : *rep.lambda) CHECK(l >= 0.0);
    }
    CHECK(r.state.allocator.has_value());
    CHECK(r.state.policies.size() == 2);
  }
  SUBCASE("uca") {
    const TrainResult r = train(small_config(TrainMode::uca, 4), 2);
    for (const auto& rep : r.reports) {
      REQUIRE(rep.c_a.has_value());
      CHECK(*rep.c_a == *rep.c_b);
      CHECK(*rep.c_a + *rep.c_b == rep.d);
    }
    CHECK_FALSE(r.state.allocator.has_value());
  }
  SUBCASE("penalty_only") {
    const TrainResult r = train(small_config(TrainMode::penalty_only, 3), 3);
    CHECK_FALSE(r.state.lagrange.has_value());
    CHECK_FALSE(r.state.allocator.has_value());
    for (const auto& rep : r.reports) {
      CHECK_FALSE(rep.lambda.has_value());
      CHECK_FALSE(rep.beta.has_value());
    }
  }
  SUBCASE("shared_params") {
    const fs::path dir = scratch("shared");
    TrainOptions opt;
    opt.out_dir = dir;
    const TrainResult r = train(small_config(TrainMode::shared_params, 3), 4, opt);
    CHECK(r.state.shared());
    CHECK(&r.state.policy(0) == &r.state.policy(1));
    const TrainingState loaded = load_checkpoint(dir / "checkpoint.json");
    CHECK(loaded.shared());
    CHECK(loaded.policy(0).params == loaded.policy(1).params);
    CHECK(loaded.policy(0).params == r.state.policy(0).params);
  }
  SUBCASE("macpo_style") {
    const TrainResult r = train(small_config(TrainMode::macpo_style, 4), 5);
    CHECK(r.state.shared());
    for (const auto& rep : r.reports) {
      REQUIRE(rep.lambda.has_value());
      for (double l : *rep.lambda) CHECK(l >= 0.0);
      CHECK(*rep.c_a + *rep.c_b == rep.d);
    }
  }
}

TEST_CASE("determinism and files") {
  const Config c = small_config(TrainMode::full, 4);
  const fs::path d1 = scratch("det1");
  const fs::path d2 = scratch("det2");
  TrainOptions o1;
  o1.out_dir = d1;
  TrainOptions o2;
  o2.out_dir = d2;
  const TrainResult a = train(c, 9, o1);
  const TrainResult b = train(c, 9, o2);
  check_same_reports(a.reports, b.reports);
  CHECK(slurp(d1 / "checkpoint.json") == slurp(d2 / "checkpoint.json"));
  CHECK(slurp(d1 / "allocation.csv") == slurp(d2 / "allocation.csv"));

  std::ifstream report(d1 / "report.csv");
  std::string header;
  std::getline(report, header);
  CHECK(header == "iter,J_R,J_C,d,beta,c_a,c_b,lambda_a,lambda_b,L_C_a,L_C_b,kl_a,kl_b,wall_ms");
  int rows = 0;
  for (std::string line; std::getline(report, line);) ++rows;
  CHECK(rows == 4);
  CHECK(fs::exists(d1 / "config.txt"));
  CHECK(parse_config(d1 / "config.txt") == c);

  const TrainResult other = train(c, 10);
  CHECK(other.reports.back().j_reward != a.reports.back().j_reward);
}

TEST_CASE("zero iterations return the initial checkpoint unchanged") {
  const Config c = small_config(TrainMode::full, 0);
  const fs::path dir = scratch("zero");
  TrainOptions opt;
  opt.out_dir = dir;
  const TrainResult r = train(c, 12, opt);
  CHECK(r.reports.empty());
  for (const auto& rep : train(small_config(TrainMode::full, 2), 12).reports) CHECK(rep.episodes > 0);
  const TrainingState init = init_training(c, 12);
  const TrainingState loaded = load_checkpoint(dir / "checkpoint.json");
  CHECK(loaded.iteration == 0);
  for (int i = 0; i < kNumAgents; ++i) CHECK(loaded.policy(i).params == init.policy(i).params);
  CHECK(loaded.critics.cost.params == init.critics.cost.params);
  CHECK(loaded.lagrange->agents[0].lambda == 0.0);
}

TEST_CASE("checkpoint round trip resumes bitwise") {
  for (TrainMode mode : {TrainMode::full, TrainMode::macpo_style}) {
    const Config c = small_config(mode, 4);
    const TrainResult straight = train(c, 31);

    TrainingState s = init_training(c, 31);
    const TransportEnv env = make_env(c.env);
    std::vector<IterationReport> reps;
    reps.push_back(train_iteration(s, env));
    reps.push_back(train_iteration(s, env));
    const fs::path dir = scratch("resume");
    save_checkpoint(s, dir / "mid.json");
    TrainingState resumed = load_checkpoint(dir / "mid.json");
    CHECK(resumed.iteration == 2);
    reps.push_back(train_iteration(resumed, env));
    reps.push_back(train_iteration(resumed, env));
    check_same_reports(straight.reports, reps);
    for (int i = 0; i < kNumAgents; ++i) CHECK(resumed.policy(i).params == straight.state.policy(i).params);

    save_checkpoint(resumed, dir / "end.json");
    save_checkpoint(load_checkpoint(dir / "end.json"), dir / "again.json");
    CHECK(slurp(dir / "end.json") == slurp(dir / "again.json"));
  }
  const fs::path bad = scratch("bad") / "x.json";
  std::ofstream(bad) << "{\"format\": \"other\"}";
  CHECK_THROWS(load_checkpoint(bad));
}

TEST_CASE("tabular sequential update improves the exact return") {
  // Agent i1 steps along its marginal advantage, agent i2 along the conditional
  // advantage weighted by i1's updated policy; the exact return must rise.
  using namespace safemarl::tabular;
  std::mt19937_64 rng(77);
  int improved = 0;
  constexpr int kGames = 40;
  for (int g = 0; g < kGames; ++g) {
    const TabularGame game = random_game(4, 3, 3, 0.9, rng());
    const TabularPolicyPair pi = random_policies(game, rng());
    const Agent first = (g % 2 == 0) ? Agent::a : Agent::b;
    const AdvantageTables adv = advantages(game, pi, Signal::reward, first);
    constexpr double eta = 0.05;
    TabularPolicyPair next = pi;
    Eigen::MatrixXd& pf = next.of(first);
    for (int s = 0; s < game.n_states; ++s) {
      for (int a = 0; a < pf.cols(); ++a) pf(s, a) *= std::exp(eta * adv.marginal(s, a));
      pf.row(s) /= pf.row(s).sum();
    }
    Eigen::MatrixXd& ps = next.of(other(first));
    for (int s = 0; s < game.n_states; ++s) {
      for (int b = 0; b < ps.cols(); ++b) {
        double m = 0.0;
        for (int a = 0; a < pf.cols(); ++a) {
          const int aa = first == Agent::a ? a : b;
          const int ab = first == Agent::a ? b : a;
          m += pf(s, a) * adv.conditional(s, aa, ab);
        }
        ps(s, b) *= std::exp(eta * m);
      }
      ps.row(s) /= ps.row(s).sum();
    }
    const Eigen::VectorXd d0 = Eigen::VectorXd::Constant(game.n_states, 1.0 / game.n_states);
    const Eigen::VectorXd w = discounted_occupancy(game, pi, d0);
    CHECK(surrogate_first(adv, next.of(first), w) >= 0.0);
    CHECK(surrogate_first(adv, next.of(first), w) + surrogate_second(adv, next.of(first), next.of(other(first)), w) >=
          0.0);
    if (discounted_return(game, next, Signal::reward, d0) > discounted_return(game, pi, Signal::reward, d0)) {
      ++improved;
    }
  }
  CHECK(improved == kGames);
}
