#pragma once

// Budget split between the two robots chosen by Bayesian optimisation over
// the fraction beta = c_a / d, with a sliding-window Gaussian-process surrogate
// of the team objective and Expected Improvement as the acquisition.

#include <Eigen/Core>
#include <Eigen/Cholesky>

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>

namespace safemarl {

struct KernelParams {
  double signal_variance = 1.0;  // sigma_f^2
  double length_scale = 0.2;     // l
  double noise_variance = 0.01;  // sigma_n^2
};

struct GPObservation {
  double beta = 0.0;
  double y = 0.0;
};

class GPWindow {
 public:
  explicit GPWindow(std::size_t capacity = 20, KernelParams kernel = {});

  /// Appends (beta, y), evicting the oldest entry once the window is full.
  void push_observation(double beta, double y);

  const std::deque<GPObservation>& entries() const { return entries_; }
  std::size_t capacity() const { return capacity_; }
  const KernelParams& kernel() const { return kernel_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  /// max y over the retained entries.
  double y_best() const;

 private:
  std::size_t capacity_;
  KernelParams kernel_;
  std::deque<GPObservation> entries_;
};

double objective_F(double j_reward, double j_cost, double w1, double w2);

double rbf_kernel(double x, double x_prime, double signal_variance, double length_scale);

struct GPPosterior {
  KernelParams kernel;
  Eigen::VectorXd inputs;
  Eigen::VectorXd targets;
  double prior_mean = 0.0;
  double jitter = 0.0;
  Eigen::MatrixXd lower;  // Cholesky factor of K + (sigma_n^2 + jitter) I
  Eigen::VectorXd alpha;  // (K + sigma_n^2 I)^{-1} (y - m)
};

/// Factorises K + sigma_n^2 I, adding jitter from 1e-10 up to 1e-6 on failure.
GPPosterior gp_fit(const GPWindow& window);

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

Prediction gp_posterior(const GPPosterior& model, double beta);

/// Closed-form EI for maximisation; zero when sigma is zero.
double expected_improvement(double mean, double sigma, double y_best);

using AcquisitionFn = std::function<double(double mean, double sigma, double y_best)>;

struct Allocation {
  double c_a = 0.0;
  double c_b = 0.0;
  double d = 0.0;
  double beta = 0.0;
};

/// Budget split with c_a = beta * d and c_b = (1 - beta) * d, rounded so that
/// c_a + c_b == d exactly.
Allocation split_budget(double d, double beta);

/// Maximises EI over a uniform grid of beta in [0, 1]; ties go to the smallest
/// beta. y_best is the largest target in the model's window.
Allocation allocate(const GPPosterior& model, double d, int grid_size,
                    const AcquisitionFn& acquisition = expected_improvement);

/// Grid point k of a uniform grid with `grid_size` points on [0, 1].
double grid_point(int k, int grid_size);

struct AllocatorConfig {
  std::size_t window = 20;
  int grid_size = 41;
  KernelParams kernel;
  int cold_start = 5;
  double w1 = 1.0;
  double w2 = 1.0;
};

/// Per-run allocator: sliding window, cold-start exploration, EI selection.
class ConstraintAllocator {
 public:
  ConstraintAllocator(AllocatorConfig config, std::uint64_t seed);

  /// Records the objective measured under the previous allocation (if any),
  /// then chooses the split of `d` for the next update.
  Allocation step(double j_reward, double j_cost, double d);

  const GPWindow& window() const { return window_; }
  GPWindow& window() { return window_; }
  const AllocatorConfig& config() const { return config_; }
  int decisions() const { return decisions_; }
  bool has_previous() const { return has_previous_; }
  double previous_beta() const { return previous_beta_; }
  double last_objective() const { return last_objective_; }
  std::mt19937_64& rng() { return rng_; }
  const std::mt19937_64& rng() const { return rng_; }

  void restore(int decisions, bool has_previous, double previous_beta, double last_objective) {
    decisions_ = decisions;
    has_previous_ = has_previous;
    previous_beta_ = previous_beta;
    last_objective_ = last_objective;
  }

 private:
  AllocatorConfig config_;
  GPWindow window_;
  std::mt19937_64 rng_;
  int decisions_ = 0;
  bool has_previous_ = false;
  double previous_beta_ = 0.0;
  double last_objective_ = 0.0;
};

}  // namespace safemarl
