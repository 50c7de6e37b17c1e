#include "safemarl/tabular_oracle.hpp"

#include <Eigen/LU>

#include <cmath>
#include <random>
#include <stdexcept>

namespace safemarl::tabular {

TabularGame::TabularGame(int n, int ma, int mb, double discount)
    : n_states(n),
      m_a(ma),
      m_b(mb),
      transition(static_cast<std::size_t>(n) * ma * mb, Eigen::VectorXd::Zero(n)),
      reward(n, ma, mb),
      cost(n, ma, mb),
      gamma(discount) {}

void TabularGame::validate() const {
  if (n_states < 1 || m_a < 1 || m_b < 1) throw std::invalid_argument("tabular game: empty dimension");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("tabular game: gamma must lie in [0, 1)");
  for (const auto& row : transition) {
    if (row.size() != n_states) throw std::invalid_argument("tabular game: transition row has wrong size");
    if ((row.array() < 0.0).any()) throw std::invalid_argument("tabular game: negative transition probability");
    if (std::abs(row.sum() - 1.0) > 1e-12) throw std::invalid_argument("tabular game: transition row does not sum to 1");
  }
  for (double c : cost.data()) {
    if (c < 0.0) throw std::invalid_argument("tabular game: negative cost");
  }
}

void TabularPolicyPair::validate(const TabularGame& game) const {
  for (Agent agent : {Agent::a, Agent::b}) {
    const auto& pi = of(agent);
    if (pi.rows() != game.n_states || pi.cols() != game.action_count(agent)) {
      throw std::invalid_argument("tabular policy: shape does not match the game");
    }
    if ((pi.array() < 0.0).any()) throw std::invalid_argument("tabular policy: negative probability");
    for (int s = 0; s < pi.rows(); ++s) {
      if (std::abs(pi.row(s).sum() - 1.0) > 1e-12) throw std::invalid_argument("tabular policy: row does not sum to 1");
    }
  }
}

namespace {

double joint_prob(const TabularPolicyPair& pi, int s, int aa, int ab) { return pi.a(s, aa) * pi.b(s, ab); }

Eigen::MatrixXd policy_transition(const TabularGame& game, const TabularPolicyPair& pi) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(game.n_states, game.n_states);
  for (int s = 0; s < game.n_states; ++s) {
    for (int aa = 0; aa < game.m_a; ++aa) {
      for (int ab = 0; ab < game.m_b; ++ab) {
        p.row(s) += joint_prob(pi, s, aa, ab) * game.next(s, aa, ab).transpose();
      }
    }
  }
  return p;
}

}  // namespace

Values exact_values(const TabularGame& game, const TabularPolicyPair& policies, Signal x) {
  if (!(game.gamma >= 0.0 && game.gamma < 1.0)) throw std::invalid_argument("exact_values: gamma must lie in [0, 1)");
  game.validate();
  policies.validate(game);
  const auto& table = game.signal(x);
  const int n = game.n_states;

  Eigen::VectorXd x_pi = Eigen::VectorXd::Zero(n);
  for (int s = 0; s < n; ++s) {
    for (int aa = 0; aa < game.m_a; ++aa) {
      for (int ab = 0; ab < game.m_b; ++ab) x_pi(s) += joint_prob(policies, s, aa, ab) * table(s, aa, ab);
    }
  }
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(n, n) - game.gamma * policy_transition(game, policies);
  Values out;
  out.v = system.fullPivLu().solve(x_pi);
  out.q = JointTable(n, game.m_a, game.m_b);
  for (int s = 0; s < n; ++s) {
    for (int aa = 0; aa < game.m_a; ++aa) {
      for (int ab = 0; ab < game.m_b; ++ab) {
        out.q(s, aa, ab) = table(s, aa, ab) + game.gamma * game.next(s, aa, ab).dot(out.v);
      }
    }
  }
  return out;
}

double bellman_residual(const TabularGame& game, const TabularPolicyPair& policies, Signal x, const Values& values) {
  const auto& table = game.signal(x);
  Eigen::VectorXd expected_q = Eigen::VectorXd::Zero(game.n_states);
  for (int s = 0; s < game.n_states; ++s) {
    for (int aa = 0; aa < game.m_a; ++aa) {
      for (int ab = 0; ab < game.m_b; ++ab) expected_q(s) += joint_prob(policies, s, aa, ab) * values.q(s, aa, ab);
    }
  }
  double worst = (expected_q - values.v).cwiseAbs().maxCoeff();
  for (int s = 0; s < game.n_states; ++s) {
    for (int aa = 0; aa < game.m_a; ++aa) {
      for (int ab = 0; ab < game.m_b; ++ab) {
        const double backup = table(s, aa, ab) + game.gamma * game.next(s, aa, ab).dot(expected_q);
        worst = std::max(worst, std::abs(values.q(s, aa, ab) - backup));
      }
    }
  }
  return worst;
}

Eigen::MatrixXd marginal_q(const TabularGame& game, const TabularPolicyPair& policies, const JointTable& q,
                           Agent first) {
  const Agent second = other(first);
  const auto& pi_second = policies.of(second);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(game.n_states, game.action_count(first));
  for (int s = 0; s < game.n_states; ++s) {
    for (int a1 = 0; a1 < game.action_count(first); ++a1) {
      double acc = 0.0;
      for (int a2 = 0; a2 < game.action_count(second); ++a2) {
        const double value = first == Agent::a ? q(s, a1, a2) : q(s, a2, a1);
        acc += pi_second(s, a2) * value;
      }
      out(s, a1) = acc;
    }
  }
  return out;
}

AdvantageTables advantages(const TabularGame& game, const TabularPolicyPair& policies, Signal x, Agent first) {
  const Values values = exact_values(game, policies, x);
  const Eigen::MatrixXd q_first = marginal_q(game, policies, values.q, first);
  AdvantageTables out;
  out.first = first;
  out.joint = JointTable(game.n_states, game.m_a, game.m_b);
  out.conditional = JointTable(game.n_states, game.m_a, game.m_b);
  out.marginal = q_first.colwise() - values.v;
  for (int s = 0; s < game.n_states; ++s) {
    for (int aa = 0; aa < game.m_a; ++aa) {
      for (int ab = 0; ab < game.m_b; ++ab) {
        const int a1 = first == Agent::a ? aa : ab;
        out.joint(s, aa, ab) = values.q(s, aa, ab) - values.v(s);
        out.conditional(s, aa, ab) = values.q(s, aa, ab) - q_first(s, a1);
      }
    }
  }
  return out;
}

double verify_decomposition(const TabularGame& game, const TabularPolicyPair& policies, int n_random_orders,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  double worst = 0.0;
  for (int k = 0; k < n_random_orders; ++k) {
    const Agent first = coin(rng) ? Agent::b : Agent::a;
    for (Signal x : {Signal::reward, Signal::cost}) {
      const auto adv = advantages(game, policies, x, first);
      for (int s = 0; s < game.n_states; ++s) {
        for (int aa = 0; aa < game.m_a; ++aa) {
          for (int ab = 0; ab < game.m_b; ++ab) {
            const int a1 = first == Agent::a ? aa : ab;
            const double r = adv.joint(s, aa, ab) - adv.marginal(s, a1) - adv.conditional(s, aa, ab);
            worst = std::max(worst, std::abs(r));
          }
        }
      }
    }
  }
  return worst;
}

double discounted_return(const TabularGame& game, const TabularPolicyPair& policies, Signal x,
                         const Eigen::VectorXd& initial_distribution) {
  if (initial_distribution.size() != game.n_states) {
    throw std::invalid_argument("discounted_return: initial distribution has wrong size");
  }
  return initial_distribution.dot(exact_values(game, policies, x).v);
}

Eigen::VectorXd discounted_occupancy(const TabularGame& game, const TabularPolicyPair& policies,
                                     const Eigen::VectorXd& initial_distribution) {
  const int n = game.n_states;
  const Eigen::MatrixXd system =
      Eigen::MatrixXd::Identity(n, n) - game.gamma * policy_transition(game, policies).transpose();
  return (1.0 - game.gamma) * system.fullPivLu().solve(initial_distribution);
}

double surrogate_first(const AdvantageTables& adv, const Eigen::MatrixXd& candidate_first,
                       const Eigen::VectorXd& state_weights) {
  double total = 0.0;
  for (int s = 0; s < adv.marginal.rows(); ++s) {
    total += state_weights(s) * candidate_first.row(s).dot(adv.marginal.row(s));
  }
  return total;
}

double surrogate_second(const AdvantageTables& adv, const Eigen::MatrixXd& updated_first,
                        const Eigen::MatrixXd& candidate_second, const Eigen::VectorXd& state_weights) {
  const auto& table = adv.conditional;
  double total = 0.0;
  for (int s = 0; s < table.n_states(); ++s) {
    double inner = 0.0;
    for (int aa = 0; aa < table.m_a(); ++aa) {
      for (int ab = 0; ab < table.m_b(); ++ab) {
        const double p = adv.first == Agent::a ? updated_first(s, aa) * candidate_second(s, ab)
                                               : updated_first(s, ab) * candidate_second(s, aa);
        inner += p * table(s, aa, ab);
      }
    }
    total += state_weights(s) * inner;
  }
  return total;
}

namespace {

Eigen::VectorXd dirichlet_ones(int n, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  v /= v.sum();
  return v;
}

}  // namespace

TabularGame random_game(int n_states, int m_a, int m_b, double gamma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ur(-1.0, 1.0);
  std::uniform_real_distribution<double> uc(0.0, 1.0);
  TabularGame game(n_states, m_a, m_b, gamma);
  for (int s = 0; s < n_states; ++s) {
    for (int aa = 0; aa < m_a; ++aa) {
      for (int ab = 0; ab < m_b; ++ab) {
        game.next(s, aa, ab) = dirichlet_ones(n_states, rng);
        game.reward(s, aa, ab) = ur(rng);
        game.cost(s, aa, ab) = uc(rng);
      }
    }
  }
  return game;
}

TabularPolicyPair random_policies(const TabularGame& game, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TabularPolicyPair pi;
  pi.a.resize(game.n_states, game.m_a);
  pi.b.resize(game.n_states, game.m_b);
  for (int s = 0; s < game.n_states; ++s) {
    pi.a.row(s) = dirichlet_ones(game.m_a, rng).transpose();
    pi.b.row(s) = dirichlet_ones(game.m_b, rng).transpose();
  }
  return pi;
}

}  // namespace safemarl::tabular
