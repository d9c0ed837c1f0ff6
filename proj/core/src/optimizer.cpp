#include "streetsafe/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace streetsafe {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw DataError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw DataError("moment decays must lie in [0,1)");
  if (!(epsilon > 0.0)) throw DataError("optimizer epsilon must be positive");
}

OptimizerState make_optimizer(const MlpParams& params, const AdamConfig& config) {
  config.validate();
  OptimizerState s;
  s.config = config;
  s.first_moment.assign(params.parameter_count(), 0.0);
  s.second_moment.assign(params.parameter_count(), 0.0);
  return s;
}

void apply_update(MlpParams& params, const MlpParams& gradient, OptimizerState& state, Direction direction) {
  if (!params.same_shape(gradient)) throw std::invalid_argument("apply_update: gradient shape mismatch");
  if (state.first_moment.size() != params.parameter_count()) throw std::invalid_argument("apply_update: optimizer shape mismatch");
  if (!gradient.all_finite()) throw NumericalError("apply_update: non-finite gradient");

  const AdamConfig& c = state.config;
  const double sign = direction == Direction::kAscent ? 1.0 : -1.0;
  ++state.step;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));

  std::size_t i = 0;
  auto step_one = [&](double& p, double g) {
    if (c.plain_gradient) {
      p += sign * c.learning_rate * g;
    } else {
      double& m = state.first_moment[i];
      double& v = state.second_moment[i];
      m = c.beta1 * m + (1.0 - c.beta1) * g;
      v = c.beta2 * v + (1.0 - c.beta2) * g * g;
      const double m_hat = m / correction1;
      const double v_hat = v / correction2;
      p += sign * c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
    ++i;
  };
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto& l = params.layers[k];
    const auto& g = gradient.layers[k];
    for (std::size_t j = 0; j < l.weights.size(); ++j) step_one(l.weights[j], g.weights[j]);
    for (std::size_t j = 0; j < l.biases.size(); ++j) step_one(l.biases[j], g.biases[j]);
  }
}

}  // namespace streetsafe
