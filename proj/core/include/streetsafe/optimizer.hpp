#pragma once

#include <cstdint>
#include <vector>

#include "streetsafe/mlp.hpp"

namespace streetsafe {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Plain gradient step (params += rate * g) instead of moment scaling.
  bool plain_gradient = false;

  void validate() const;
  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

enum class Direction { kAscent, kDescent };

/// First and second moment accumulators, flattened in layer order
/// (weights, then biases, per layer).
struct OptimizerState {
  AdamConfig config;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::int64_t step = 0;
};

OptimizerState make_optimizer(const MlpParams& params, const AdamConfig& config = {});

/// One update of `params` from `gradient`. Throws NumericalError on a
/// non-finite gradient, leaving params and state untouched.
void apply_update(MlpParams& params, const MlpParams& gradient, OptimizerState& state,
                  Direction direction = Direction::kAscent);

}  // namespace streetsafe
