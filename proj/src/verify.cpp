#include "safemarl/verify.hpp"

#include "safemarl/policy.hpp"
#include "safemarl/tabular_oracle.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>

namespace safemarl {

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

namespace {

using tabular::Agent;
using tabular::Signal;

void decomposition_checks(const VerifyOptions& opt, std::vector<CheckResult>& out) {
  std::mt19937_64 rng(opt.seed);
  std::uniform_int_distribution<int> states(2, 6);
  std::uniform_int_distribution<int> actions(2, 4);
  std::uniform_real_distribution<double> discount(0.5, 0.95);
  double decomposition = 0.0;
  double bellman = 0.0;
  for (int g = 0; g < opt.n_games; ++g) {
    const auto game = tabular::random_game(states(rng), actions(rng), actions(rng), discount(rng), rng());
    const auto pols = tabular::random_policies(game, rng());
    for (Signal x : {Signal::reward, Signal::cost}) {
      const auto values = tabular::exact_values(game, pols, x);
      bellman = std::max(bellman, tabular::bellman_residual(game, pols, x, values));
      for (Agent first : {Agent::a, Agent::b}) {
        const auto adv = tabular::advantages(game, pols, x, first);
        for (int s = 0; s < game.n_states; ++s) {
          for (int aa = 0; aa < game.m_a; ++aa) {
            for (int ab = 0; ab < game.m_b; ++ab) {
              const int af = first == Agent::a ? aa : ab;
              const double r = adv.joint(s, aa, ab) - adv.marginal(s, af) - adv.conditional(s, aa, ab);
              decomposition = std::max(decomposition, std::abs(r));
            }
          }
        }
      }
    }
  }
  out.push_back({"advantage decomposition (tabular)", decomposition, 1e-8, decomposition <= 1e-8});
  out.push_back({"bellman residual (tabular)", bellman, 1e-8, bellman <= 1e-8});
}

void gp_checks(const VerifyOptions& opt, std::vector<CheckResult>& out) {
  std::mt19937_64 rng(opt.seed + 1);
  std::uniform_int_distribution<int> size(1, 20);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  for (int w = 0; w < opt.gp_windows; ++w) {
    GPWindow window(20, KernelParams{});
    const int n = size(rng);
    for (int i = 0; i < n; ++i) window.push_observation(unit(rng), 3.0 * normal(rng));
    const GPPosterior model = gp_fit(window);
    const auto& k = model.kernel;
    Eigen::MatrixXd gram(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double d = model.inputs(i) - model.inputs(j);
        gram(i, j) = k.signal_variance * std::exp(-d * d / (2.0 * k.length_scale * k.length_scale));
      }
      gram(i, i) += k.noise_variance + model.jitter;
    }
    const Eigen::MatrixXd inv = gram.fullPivLu().inverse();
    const double m = model.targets.mean();
    for (int t = 0; t < 10; ++t) {
      const double beta = unit(rng);
      Eigen::VectorXd ks(n);
      for (int i = 0; i < n; ++i) {
        const double d = beta - model.inputs(i);
        ks(i) = k.signal_variance * std::exp(-d * d / (2.0 * k.length_scale * k.length_scale));
      }
      const double mean_ref = m + ks.dot(inv * (model.targets.array() - m).matrix());
      const double var_ref = std::max(0.0, k.signal_variance - ks.dot(inv * ks));
      const Prediction p = gp_posterior(model, beta);
      worst = std::max({worst, std::abs(p.mean - mean_ref), std::abs(p.variance - var_ref)});
    }
  }
  out.push_back({"gp posterior vs dense inverse", worst, 1e-8, worst <= 1e-8});
}

void ei_checks(const VerifyOptions& opt, std::vector<CheckResult>& out) {
  std::mt19937_64 rng(opt.seed + 2);
  std::uniform_real_distribution<double> loc(-2.0, 2.0);
  std::uniform_real_distribution<double> scale(0.05, 2.0);
  std::uniform_real_distribution<double> gap(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst_z = 0.0;
  for (int p = 0; p < opt.ei_points; ++p) {
    double mu = loc(rng);
    double sigma = scale(rng);
    // Incumbents within two sigma of the mean, where sampling resolves the tail.
    const double y_best = mu + sigma * (4.0 * gap(rng) - 2.0);
    // One point sits at sigma = 0 below the incumbent, where improvement is impossible.
    if (p == 0) {
      sigma = 0.0;
      mu = y_best - gap(rng);
    }
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int i = 0; i < opt.mc_samples; ++i) {
      const double v = std::max(0.0, mu + sigma * normal(rng) - y_best);
      sum += v;
      sum_sq += v * v;
    }
    const double n = opt.mc_samples;
    const double mc = sum / n;
    const double se = std::sqrt(std::max(0.0, sum_sq / n - mc * mc) / n);
    const double ei = opt.acquisition(mu, sigma, y_best);
    const double diff = std::abs(ei - mc);
    const double z = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    worst_z = std::max(worst_z, z);
  }
  out.push_back({"expected improvement vs monte carlo (std errors)", worst_z, 3.0, worst_z <= 3.0});

  double zero = 0.0;
  for (double mu : {-1.0, 0.0, 0.5, 3.0}) zero = std::max(zero, std::abs(opt.acquisition(mu, 0.0, 0.0)));
  out.push_back({"expected improvement at zero sigma", zero, 0.0, zero == 0.0});
}

template <typename Loss>
double finite_difference_check(std::vector<double>& params, const std::vector<double>& analytic,
                               const std::vector<std::size_t>& coords, Loss&& loss) {
  constexpr double h = 1e-5;
  double worst = 0.0;
  for (std::size_t c : coords) {
    const double saved = params[c];
    params[c] = saved + h;
    const double up = loss();
    params[c] = saved - h;
    const double down = loss();
    params[c] = saved;
    worst = std::max(worst, relative_error(analytic[c], (up - down) / (2.0 * h)));
  }
  return worst;
}

std::vector<std::size_t> coordinates(std::size_t n, std::size_t limit, std::mt19937_64& rng) {
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  if (n <= limit) return all;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(limit);
  return all;
}

void gradient_checks(const VerifyOptions& opt, std::vector<CheckResult>& out) {
  std::mt19937_64 rng(opt.seed + 3);
  std::uniform_int_distribution<int> small(2, 6);
  std::uniform_int_distribution<int> width(3, 8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst_policy = 0.0;
  double worst_critic = 0.0;
  constexpr double clip = 0.2;
  for (int c = 0; c < opt.grad_cases; ++c) {
    // Every tenth case uses the production network size on sampled coordinates.
    const bool full = c % 10 == 9;
    const int obs_dim = full ? 18 : small(rng);
    const int act_dim = full ? 3 : std::min(3, small(rng) - 1);
    const int hidden = full ? 64 : width(rng);
    const int batch = full ? 16 : 6;

    GaussianPolicy policy = GaussianPolicy::create(obs_dim, hidden, act_dim, 0.0, rng());
    for (std::size_t i = 0; i < policy.trunk.param_count(); ++i) policy.params[i] += 0.3 * normal(rng);
    for (int k = 0; k < act_dim; ++k) policy.params[policy.trunk.param_count() + k] = -1.0 + 1.5 * unit(rng);
    PolicySamples s;
    s.obs = Eigen::MatrixXd::NullaryExpr(obs_dim, batch, [&] { return normal(rng); });
    s.actions = Eigen::MatrixXd::NullaryExpr(act_dim, batch, [&] { return normal(rng); });
    s.adv_reward = Eigen::VectorXd::NullaryExpr(batch, [&] { return normal(rng); });
    s.adv_cost = Eigen::VectorXd::NullaryExpr(batch, [&] { return normal(rng); });
    s.behavior_logp.resize(batch);
    const GaussianBatch dist = forward_policy(policy, s.obs);
    for (int i = 0; i < batch; ++i) {
      std::vector<double> mean(static_cast<std::size_t>(act_dim));
      std::vector<double> sd(static_cast<std::size_t>(act_dim));
      std::vector<double> act(static_cast<std::size_t>(act_dim));
      for (int k = 0; k < act_dim; ++k) {
        mean[k] = dist.mean(k, i);
        sd[k] = dist.std(k);
        act[k] = s.actions(k, i);
      }
      const double logp = log_prob(mean, sd, act);
      // Keep log-ratios away from the clip kinks so central differences stay on one branch.
      double offset = 0.0;
      do {
        offset = -0.35 + 0.7 * unit(rng);
      } while (std::abs(offset - std::log(1.0 + clip)) < 0.02 || std::abs(offset - std::log(1.0 - clip)) < 0.02);
      s.behavior_logp(i) = logp - offset;
    }
    const double lambda = 3.0 * unit(rng);
    if (c % 2 == 1) s.lambda = Eigen::VectorXd::NullaryExpr(batch, [&] { return 2.0 * unit(rng); });

    const LossAndGrad g = lagrangian_policy_loss(policy, s, lambda, clip);
    const auto coords = coordinates(policy.params.size(), full ? 200 : policy.params.size(), rng);
    worst_policy = std::max(worst_policy, finite_difference_check(policy.params, g.grad, coords, [&] {
                              return lagrangian_policy_loss(policy, s, lambda, clip).loss;
                            }));

    Critic critic = Critic::create(full ? 36 : obs_dim, hidden, rng());
    for (double& p : critic.params) p += 0.3 * normal(rng);
    const Eigen::MatrixXd input =
        Eigen::MatrixXd::NullaryExpr(critic.shape.input_dim(), batch, [&] { return normal(rng); });
    const Eigen::VectorXd targets = Eigen::VectorXd::NullaryExpr(batch, [&] { return normal(rng); });
    const LossAndGrad cg = critic_loss(critic, input, targets);
    const auto critic_coords = coordinates(critic.params.size(), full ? 200 : critic.params.size(), rng);
    worst_critic = std::max(worst_critic, finite_difference_check(critic.params, cg.grad, critic_coords, [&] {
                              return critic_loss(critic, input, targets).loss;
                            }));
  }
  out.push_back({"policy loss gradient vs finite differences", worst_policy, 1e-4, worst_policy <= 1e-4});
  out.push_back({"critic loss gradient vs finite differences", worst_critic, 1e-4, worst_critic <= 1e-4});
}

}  // namespace

std::vector<CheckResult> run_verification(const VerifyOptions& options) {
  std::vector<CheckResult> out;
  decomposition_checks(options, out);
  gp_checks(options, out);
  ei_checks(options, out);
  gradient_checks(options, out);
  return out;
}

void print_checks(std::ostream& out, const std::vector<CheckResult>& checks) {
  char line[256];
  std::snprintf(line, sizeof(line), "%-52s %14s %12s  %s\n", "check", "residual", "threshold", "status");
  out << line;
  for (const auto& c : checks) {
    std::snprintf(line, sizeof(line), "%-52s %14.6e %12.3e  %s\n", c.name.c_str(), c.residual, c.threshold,
                  c.pass ? "PASS" : "FAIL");
    out << line;
  }
}

bool all_passed(const std::vector<CheckResult>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

}  // namespace safemarl
