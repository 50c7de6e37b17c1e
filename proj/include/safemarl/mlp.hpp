#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace safemarl {

/// Layer widths of a dense network with tanh hidden activations and a linear
/// output layer. Parameters live in one flat array, layer by layer, each layer
/// storing its column-major (out x in) weight matrix followed by its bias.
struct MlpShape {
  std::vector<int> sizes;

  int input_dim() const { return sizes.front(); }
  int output_dim() const { return sizes.back(); }
  int layer_count() const { return static_cast<int>(sizes.size()) - 1; }
  std::size_t param_count() const;
  std::size_t weight_offset(int layer) const;
  std::size_t bias_offset(int layer) const { return weight_offset(layer) + static_cast<std::size_t>(sizes[layer + 1]) * sizes[layer]; }
};

/// Intermediate activations kept for the backward pass.
struct MlpTape {
  std::vector<Eigen::MatrixXd> activations;  // input, then each layer output
};

/// Forward pass on a batch stored column-wise (input_dim x batch).
Eigen::MatrixXd mlp_forward(const MlpShape& shape, std::span<const double> params, const Eigen::MatrixXd& input,
                            MlpTape* tape = nullptr);

/// Accumulates dLoss/dparams into `grad` given dLoss/doutput.
/// Returns dLoss/dinput.
Eigen::MatrixXd mlp_backward(const MlpShape& shape, std::span<const double> params, const MlpTape& tape,
                             const Eigen::MatrixXd& grad_output, std::span<double> grad);

/// Glorot-uniform weights, zero biases; the output layer is scaled by `output_gain`.
std::vector<double> mlp_init(const MlpShape& shape, std::uint64_t seed, double output_gain = 1.0);

}  // namespace safemarl
