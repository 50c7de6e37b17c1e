#include "safemarl/allocator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace safemarl {

GPWindow::GPWindow(std::size_t capacity, KernelParams kernel) : capacity_(capacity), kernel_(kernel) {
  if (capacity_ == 0) throw std::invalid_argument("GP window: capacity must be >= 1");
  if (!(kernel_.length_scale > 0.0)) throw std::invalid_argument("GP window: length scale must be > 0");
  if (!(kernel_.signal_variance > 0.0)) throw std::invalid_argument("GP window: signal variance must be > 0");
  if (kernel_.noise_variance < 0.0) throw std::invalid_argument("GP window: noise variance must be >= 0");
}

void GPWindow::push_observation(double beta, double y) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("push_observation: beta must lie in [0, 1]");
  if (!std::isfinite(y)) throw std::invalid_argument("push_observation: objective must be finite");
  entries_.push_back({beta, y});
  while (entries_.size() > capacity_) entries_.pop_front();
}

double GPWindow::y_best() const {
  if (entries_.empty()) throw std::logic_error("y_best: empty window");
  double best = entries_.front().y;
  for (const auto& e : entries_) best = std::max(best, e.y);
  return best;
}

double objective_F(double j_reward, double j_cost, double w1, double w2) {
  if (w1 < 0.0 || w2 < 0.0) throw std::invalid_argument("objective_F: weights must be non-negative");
  return w1 * j_reward - w2 * j_cost;
}

double rbf_kernel(double x, double x_prime, double signal_variance, double length_scale) {
  if (!(length_scale > 0.0)) throw std::invalid_argument("rbf_kernel: length scale must be > 0");
  const double d = x - x_prime;
  return signal_variance * std::exp(-(d * d) / (2.0 * length_scale * length_scale));
}

GPPosterior gp_fit(const GPWindow& window) {
  if (window.empty()) throw std::invalid_argument("gp_fit: empty window");
  const auto& entries = window.entries();
  const auto n = static_cast<Eigen::Index>(entries.size());
  GPPosterior model;
  model.kernel = window.kernel();
  model.inputs.resize(n);
  model.targets.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    model.inputs(i) = entries[static_cast<std::size_t>(i)].beta;
    model.targets(i) = entries[static_cast<std::size_t>(i)].y;
  }
  model.prior_mean = model.targets.mean();

  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      k(i, j) = rbf_kernel(model.inputs(i), model.inputs(j), model.kernel.signal_variance, model.kernel.length_scale);
    }
  }
  const Eigen::MatrixXd base = k + model.kernel.noise_variance * Eigen::MatrixXd::Identity(n, n);
  double jitter = 0.0;
  for (;;) {
    Eigen::LLT<Eigen::MatrixXd> llt(base + jitter * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) {
      model.lower = llt.matrixL();
      model.jitter = jitter;
      const Eigen::VectorXd centered = model.targets.array() - model.prior_mean;
      model.alpha = llt.solve(centered);
      return model;
    }
    if (jitter >= 1e-6) break;
    jitter = jitter == 0.0 ? 1e-10 : jitter * 10.0;
  }
  throw std::runtime_error("gp_fit: kernel matrix not positive definite even with maximal jitter");
}

Prediction gp_posterior(const GPPosterior& model, double beta) {
  const Eigen::Index n = model.inputs.size();
  Eigen::VectorXd k_star(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k_star(i) = rbf_kernel(beta, model.inputs(i), model.kernel.signal_variance, model.kernel.length_scale);
  }
  Prediction out;
  out.mean = model.prior_mean + k_star.dot(model.alpha);
  const Eigen::VectorXd v = model.lower.triangularView<Eigen::Lower>().solve(k_star);
  out.variance = std::max(0.0, model.kernel.signal_variance - v.squaredNorm());
  return out;
}

double expected_improvement(double mean, double sigma, double y_best) {
  if (sigma < 0.0) throw std::invalid_argument("expected_improvement: sigma must be >= 0");
  if (sigma == 0.0) return 0.0;
  const double improvement = mean - y_best;
  const double z = improvement / sigma;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return improvement * cdf + sigma * pdf;
}

Allocation split_budget(double d, double beta) {
  Allocation a;
  a.d = d;
  a.beta = beta;
  // Subtracting the larger share is exact, so c_a + c_b reproduces d bit for bit.
  if (beta >= 0.5) {
    a.c_a = beta * d;
    a.c_b = d - a.c_a;
  } else {
    a.c_b = (1.0 - beta) * d;
    a.c_a = d - a.c_b;
  }
  return a;
}

double grid_point(int k, int grid_size) {
  return static_cast<double>(k) / static_cast<double>(grid_size - 1);
}

Allocation allocate(const GPPosterior& model, double d, int grid_size, const AcquisitionFn& acquisition) {
  if (grid_size < 2) throw std::invalid_argument("allocate: grid_size must be >= 2");
  const double y_best = model.targets.maxCoeff();
  int best_k = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < grid_size; ++k) {
    const Prediction p = gp_posterior(model, grid_point(k, grid_size));
    const double value = acquisition(p.mean, std::sqrt(p.variance), y_best);
    if (value > best_value) {
      best_value = value;
      best_k = k;
    }
  }
  return split_budget(d, grid_point(best_k, grid_size));
}

ConstraintAllocator::ConstraintAllocator(AllocatorConfig config, std::uint64_t seed)
    : config_(config), window_(config.window, config.kernel), rng_(seed) {
  if (config_.grid_size < 2) throw std::invalid_argument("allocator: grid_size must be >= 2");
  if (config_.cold_start < 0) throw std::invalid_argument("allocator: cold_start must be >= 0");
}

Allocation ConstraintAllocator::step(double j_reward, double j_cost, double d) {
  if (has_previous_) {
    last_objective_ = objective_F(j_reward, j_cost, config_.w1, config_.w2);
    window_.push_observation(previous_beta_, last_objective_);
  }
  Allocation out;
  if (decisions_ < config_.cold_start || window_.empty()) {
    std::uniform_int_distribution<int> pick(0, config_.grid_size - 1);
    out = split_budget(d, grid_point(pick(rng_), config_.grid_size));
  } else {
    out = allocate(gp_fit(window_), d, config_.grid_size);
  }
  previous_beta_ = out.beta;
  has_previous_ = true;
  ++decisions_;
  return out;
}

}  // namespace safemarl
