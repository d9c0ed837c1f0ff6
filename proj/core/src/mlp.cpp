#include "streetsafe/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace streetsafe {

std::vector<std::size_t> MlpParams::layer_sizes() const {
  std::vector<std::size_t> sizes;
  if (layers.empty()) return sizes;
  sizes.push_back(layers.front().fan_in);
  for (const auto& l : layers) sizes.push_back(l.fan_out);
  return sizes;
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.biases.size();
  return n;
}

bool MlpParams::same_shape(const MlpParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].fan_in != other.layers[i].fan_in || layers[i].fan_out != other.layers[i].fan_out) return false;
  }
  return true;
}

bool MlpParams::all_finite() const {
  for (const auto& l : layers) {
    for (double v : l.weights) if (!std::isfinite(v)) return false;
    for (double v : l.biases) if (!std::isfinite(v)) return false;
  }
  return true;
}

void MlpParams::set_zero() {
  for (auto& l : layers) {
    std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::fill(l.biases.begin(), l.biases.end(), 0.0);
  }
}

void MlpParams::axpy(double scale, const MlpParams& other) {
  if (!same_shape(other)) throw std::invalid_argument("MlpParams::axpy: shape mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& a = layers[i];
    const auto& b = other.layers[i];
    for (std::size_t j = 0; j < a.weights.size(); ++j) a.weights[j] += scale * b.weights[j];
    for (std::size_t j = 0; j < a.biases.size(); ++j) a.biases[j] += scale * b.biases[j];
  }
}

double MlpParams::squared_norm() const {
  double s = 0.0;
  for (const auto& l : layers) {
    for (double v : l.weights) s += v * v;
    for (double v : l.biases) s += v * v;
  }
  return s;
}

MlpParams make_mlp(std::span<const std::size_t> sizes) {
  if (sizes.size() < 2) throw std::invalid_argument("make_mlp: need at least input and output widths");
  MlpParams p;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    DenseLayer l;
    l.fan_in = sizes[i];
    l.fan_out = sizes[i + 1];
    l.weights.assign(l.fan_in * l.fan_out, 0.0);
    l.biases.assign(l.fan_out, 0.0);
    p.layers.push_back(std::move(l));
  }
  return p;
}

void glorot_uniform_init(MlpParams& params, Rng& rng) {
  for (auto& l : params.layers) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.fan_in + l.fan_out));
    for (double& w : l.weights) w = rng.uniform(-bound, bound);
    std::fill(l.biases.begin(), l.biases.end(), 0.0);
  }
}

std::span<const double> forward(const MlpParams& params, std::span<const double> input, OutputActivation output,
                                MlpTrace& trace) {
  const std::size_t n_layers = params.layers.size();
  if (n_layers == 0 || input.size() != params.layers.front().fan_in) {
    throw std::invalid_argument("forward: input width does not match the network");
  }
  trace.activations.resize(n_layers + 1);
  trace.activations[0].assign(input.begin(), input.end());
  for (std::size_t k = 0; k < n_layers; ++k) {
    const DenseLayer& l = params.layers[k];
    const auto& x = trace.activations[k];
    auto& y = trace.activations[k + 1];
    y.resize(l.fan_out);
    const bool activate = k + 1 < n_layers || output == OutputActivation::kTanh;
    for (std::size_t r = 0; r < l.fan_out; ++r) {
      const double* row = &l.weights[r * l.fan_in];
      double z = l.biases[r];
      for (std::size_t c = 0; c < l.fan_in; ++c) z += row[c] * x[c];
      y[r] = activate ? std::tanh(z) : z;
    }
  }
  return trace.activations.back();
}

void backward(const MlpParams& params, const MlpTrace& trace, std::span<const double> upstream,
              OutputActivation output, MlpParams& grad, std::vector<double>* input_grad) {
  const std::size_t n_layers = params.layers.size();
  if (trace.activations.size() != n_layers + 1) throw std::invalid_argument("backward: trace does not match the network");
  if (upstream.size() != params.layers.back().fan_out) throw std::invalid_argument("backward: upstream width mismatch");
  if (!grad.same_shape(params)) throw std::invalid_argument("backward: gradient shape mismatch");

  std::vector<double> delta(upstream.begin(), upstream.end());
  std::vector<double> next;
  for (std::size_t k = n_layers; k-- > 0;) {
    const DenseLayer& l = params.layers[k];
    DenseLayer& g = grad.layers[k];
    const auto& x = trace.activations[k];
    const auto& y = trace.activations[k + 1];
    const bool activate = k + 1 < n_layers || output == OutputActivation::kTanh;
    if (activate) {
      for (std::size_t r = 0; r < l.fan_out; ++r) delta[r] *= 1.0 - y[r] * y[r];
    }
    for (std::size_t r = 0; r < l.fan_out; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      double* grow = &g.weights[r * l.fan_in];
      for (std::size_t c = 0; c < l.fan_in; ++c) grow[c] += d * x[c];
      g.biases[r] += d;
    }
    if (k == 0 && input_grad == nullptr) break;
    next.assign(l.fan_in, 0.0);
    for (std::size_t r = 0; r < l.fan_out; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      const double* row = &l.weights[r * l.fan_in];
      for (std::size_t c = 0; c < l.fan_in; ++c) next[c] += d * row[c];
    }
    delta.swap(next);
  }
  if (input_grad) *input_grad = delta;
}

}  // namespace streetsafe
