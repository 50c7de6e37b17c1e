#include "safemarl/mlp.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace safemarl {

namespace {

using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

}  // namespace

std::size_t MlpShape::param_count() const {
  std::size_t n = 0;
  for (int l = 0; l < layer_count(); ++l) n += static_cast<std::size_t>(sizes[l + 1]) * (sizes[l] + 1);
  return n;
}

std::size_t MlpShape::weight_offset(int layer) const {
  std::size_t n = 0;
  for (int l = 0; l < layer; ++l) n += static_cast<std::size_t>(sizes[l + 1]) * (sizes[l] + 1);
  return n;
}

Eigen::MatrixXd mlp_forward(const MlpShape& shape, std::span<const double> params, const Eigen::MatrixXd& input,
                            MlpTape* tape) {
  if (params.size() != shape.param_count()) throw std::invalid_argument("mlp_forward: parameter count mismatch");
  if (input.rows() != shape.input_dim()) throw std::invalid_argument("mlp_forward: input dimension mismatch");
  if (!input.allFinite()) throw std::invalid_argument("mlp_forward: non-finite input");
  if (tape) {
    tape->activations.clear();
    tape->activations.push_back(input);
  }
  Eigen::MatrixXd h = input;
  for (int l = 0; l < shape.layer_count(); ++l) {
    const int in = shape.sizes[l];
    const int out = shape.sizes[l + 1];
    ConstMap w(params.data() + shape.weight_offset(l), out, in);
    ConstVecMap b(params.data() + shape.bias_offset(l), out);
    Eigen::MatrixXd z = w * h;
    z.colwise() += b;
    if (l + 1 < shape.layer_count()) z = z.array().tanh().matrix();
    h = std::move(z);
    if (tape) tape->activations.push_back(h);
  }
  return h;
}

Eigen::MatrixXd mlp_backward(const MlpShape& shape, std::span<const double> params, const MlpTape& tape,
                             const Eigen::MatrixXd& grad_output, std::span<double> grad) {
  if (grad.size() != shape.param_count()) throw std::invalid_argument("mlp_backward: gradient size mismatch");
  if (tape.activations.size() != static_cast<std::size_t>(shape.layer_count()) + 1) {
    throw std::invalid_argument("mlp_backward: tape does not match the network");
  }
  Eigen::MatrixXd delta = grad_output;
  for (int l = shape.layer_count() - 1; l >= 0; --l) {
    const int in = shape.sizes[l];
    const int out = shape.sizes[l + 1];
    if (l + 1 < shape.layer_count()) {
      const auto& y = tape.activations[l + 1];
      delta = (delta.array() * (1.0 - y.array().square())).matrix();
    }
    const auto& x = tape.activations[l];
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + shape.weight_offset(l), out, in);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + shape.bias_offset(l), out);
    gw.noalias() += delta * x.transpose();
    gb.noalias() += delta.rowwise().sum();
    ConstMap w(params.data() + shape.weight_offset(l), out, in);
    delta = w.transpose() * delta;
  }
  return delta;
}

std::vector<double> mlp_init(const MlpShape& shape, std::uint64_t seed, double output_gain) {
  std::vector<double> params(shape.param_count(), 0.0);
  std::mt19937_64 rng(seed);
  for (int l = 0; l < shape.layer_count(); ++l) {
    const int in = shape.sizes[l];
    const int out = shape.sizes[l + 1];
    double limit = std::sqrt(6.0 / (in + out));
    if (l + 1 == shape.layer_count()) limit *= output_gain;
    std::uniform_real_distribution<double> u(-limit, limit);
    const std::size_t w0 = shape.weight_offset(l);
    for (std::size_t k = 0; k < static_cast<std::size_t>(in) * out; ++k) params[w0 + k] = u(rng);
  }
  return params;
}

}  // namespace safemarl
