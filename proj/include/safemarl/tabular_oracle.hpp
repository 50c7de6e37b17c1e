#pragma once

// Exact dynamic-programming evaluation of small two-agent games. Serves as the
// ground truth for the sampled advantage estimators.

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace safemarl::tabular {

enum class Signal { reward, cost };
enum class Agent { a = 0, b = 1 };

inline Agent other(Agent agent) { return agent == Agent::a ? Agent::b : Agent::a; }

/// Dense table indexed by (state, action of robot a, action of robot b).
class JointTable {
 public:
  JointTable() = default;
  JointTable(int n_states, int m_a, int m_b, double fill = 0.0)
      : n_states_(n_states), m_a_(m_a), m_b_(m_b), data_(static_cast<std::size_t>(n_states) * m_a * m_b, fill) {}

  double& operator()(int s, int aa, int ab) { return data_[index(s, aa, ab)]; }
  double operator()(int s, int aa, int ab) const { return data_[index(s, aa, ab)]; }

  int n_states() const { return n_states_; }
  int m_a() const { return m_a_; }
  int m_b() const { return m_b_; }
  std::span<const double> data() const { return data_; }

 private:
  std::size_t index(int s, int aa, int ab) const {
    return (static_cast<std::size_t>(s) * m_a_ + aa) * m_b_ + ab;
  }

  int n_states_ = 0;
  int m_a_ = 0;
  int m_b_ = 0;
  std::vector<double> data_;
};

struct TabularGame {
  int n_states = 0;
  int m_a = 0;
  int m_b = 0;
  // transition[(s, aa, ab)] is a row of next-state probabilities.
  std::vector<Eigen::VectorXd> transition;
  JointTable reward;
  JointTable cost;
  double gamma = 0.9;

  TabularGame() = default;
  TabularGame(int n, int ma, int mb, double discount);

  int action_count(Agent agent) const { return agent == Agent::a ? m_a : m_b; }
  const Eigen::VectorXd& next(int s, int aa, int ab) const {
    return transition[(static_cast<std::size_t>(s) * m_a + aa) * m_b + ab];
  }
  Eigen::VectorXd& next(int s, int aa, int ab) {
    return transition[(static_cast<std::size_t>(s) * m_a + aa) * m_b + ab];
  }
  const JointTable& signal(Signal x) const { return x == Signal::reward ? reward : cost; }

  void validate() const;
};

/// Row-stochastic policy matrices, one per robot (rows are states).
struct TabularPolicyPair {
  Eigen::MatrixXd a;
  Eigen::MatrixXd b;

  const Eigen::MatrixXd& of(Agent agent) const { return agent == Agent::a ? a : b; }
  Eigen::MatrixXd& of(Agent agent) { return agent == Agent::a ? a : b; }

  void validate(const TabularGame& game) const;
};

struct Values {
  JointTable q;
  Eigen::VectorXd v;
};

/// Solves (I - gamma P_pi) V = X_pi directly, then Q = X + gamma P V.
Values exact_values(const TabularGame& game, const TabularPolicyPair& policies, Signal x);

/// Largest |Q - (X + gamma E[Q'])| over all entries.
double bellman_residual(const TabularGame& game, const TabularPolicyPair& policies, Signal x, const Values& values);

/// Q^{first}(s, a_first): Q averaged over the other robot's policy.
Eigen::MatrixXd marginal_q(const TabularGame& game, const TabularPolicyPair& policies, const JointTable& q,
                           Agent first);

struct AdvantageTables {
  Agent first = Agent::a;
  JointTable joint;        // A = Q - V
  Eigen::MatrixXd marginal;  // A^{i1}(s, a_first) = Q^{i1} - V
  JointTable conditional;  // A^{i1,2} = Q - Q^{i1}, indexed (s, a_a, a_b)
};

AdvantageTables advantages(const TabularGame& game, const TabularPolicyPair& policies, Signal x, Agent first);

/// Max |A - A^{i1} - A^{i1,2}| over states, joint actions, both signals and
/// `n_random_orders` update orders drawn from `seed`.
double verify_decomposition(const TabularGame& game, const TabularPolicyPair& policies, int n_random_orders,
                            std::uint64_t seed = 0);

/// J_X = sum_s d0(s) V_X(s).
double discounted_return(const TabularGame& game, const TabularPolicyPair& policies, Signal x,
                         const Eigen::VectorXd& initial_distribution);

/// Normalised discounted state occupancy (1 - gamma) sum_t gamma^t Pr(s_t = s).
Eigen::VectorXd discounted_occupancy(const TabularGame& game, const TabularPolicyPair& policies,
                                     const Eigen::VectorXd& initial_distribution);

/// E_{s~w, a_first~candidate}[A^{i1}(s, a_first)].
double surrogate_first(const AdvantageTables& adv, const Eigen::MatrixXd& candidate_first,
                       const Eigen::VectorXd& state_weights);

/// E_{s~w, a_first~updated_first, a_second~candidate_second}[A^{i1,2}].
double surrogate_second(const AdvantageTables& adv, const Eigen::MatrixXd& updated_first,
                        const Eigen::MatrixXd& candidate_second, const Eigen::VectorXd& state_weights);

/// Dirichlet(1) transitions, rewards U[-1, 1], costs U[0, 1].
TabularGame random_game(int n_states, int m_a, int m_b, double gamma, std::uint64_t seed);
TabularPolicyPair random_policies(const TabularGame& game, std::uint64_t seed);

}  // namespace safemarl::tabular
