#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "streetsafe/common.hpp"

namespace streetsafe {

/// Fully connected layer y = W x + b with W stored row-major (fan_out x fan_in).
struct DenseLayer {
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  std::vector<double> weights;
  std::vector<double> biases;

  double& w(std::size_t row, std::size_t col) { return weights[row * fan_in + col]; }
  double w(std::size_t row, std::size_t col) const { return weights[row * fan_in + col]; }

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Stack of dense layers with tanh between them. The same type holds
/// gradients of a network.
struct MlpParams {
  std::vector<DenseLayer> layers;

  std::vector<std::size_t> layer_sizes() const;
  std::size_t parameter_count() const;
  bool same_shape(const MlpParams& other) const;
  bool all_finite() const;
  void set_zero();
  /// this += scale * other
  void axpy(double scale, const MlpParams& other);
  double squared_norm() const;

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Zero-initialised network with the given layer widths.
MlpParams make_mlp(std::span<const std::size_t> sizes);

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero. Weights
/// are drawn layer by layer in row-major order.
void glorot_uniform_init(MlpParams& params, Rng& rng);

enum class OutputActivation { kLinear, kTanh };

/// Post-activation values of every layer; entry 0 is the input.
struct MlpTrace {
  std::vector<std::vector<double>> activations;
};

/// Hidden layers use tanh; the last layer uses `output`.
std::span<const double> forward(const MlpParams& params, std::span<const double> input, OutputActivation output,
                                MlpTrace& trace);

/// Reverse-mode pass for upstream . output. Adds parameter gradients into
/// `grad` (same shape as `params`) and, when `input_grad` is non-null,
/// writes the gradient with respect to the input.
void backward(const MlpParams& params, const MlpTrace& trace, std::span<const double> upstream,
              OutputActivation output, MlpParams& grad, std::vector<double>* input_grad = nullptr);

}  // namespace streetsafe
