#include "streetsafe/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace streetsafe {

namespace {

Action greedy(const RewardSource& reward, StateId s) {
  return reward.reward(s, Action::kSafe) >= reward.reward(s, Action::kUnsafe) ? Action::kSafe : Action::kUnsafe;
}

}  // namespace

DemonstrationSet sample_demonstrations(const RewardSource& reward, const StateSampler& sampler, std::size_t n,
                                       Rng& rng, SamplingMode mode) {
  DemonstrationSet demos;
  for (std::size_t i = 0; i < n; ++i) {
    const StateId s = sampler.sample(rng);
    Action a;
    if (mode == SamplingMode::kGreedy) {
      a = greedy(reward, s);
    } else {
      // pi(unsafe | s) = 1 / (1 + exp(R_safe - R_unsafe))
      const double gap = reward.reward(s, Action::kSafe) - reward.reward(s, Action::kUnsafe);
      const double p_unsafe = 1.0 / (1.0 + std::exp(gap));
      a = rng.uniform() < p_unsafe ? Action::kUnsafe : Action::kSafe;
    }
    demos.add({s, a});
  }
  return demos;
}

DemonstrationSet regenerate_greedy(const RewardSource& reward, const DemonstrationSet& demos) {
  DemonstrationSet out;
  for (const auto& d : demos.items()) out.add({d.state, greedy(reward, d.state)});
  return out;
}

void SyntheticExpertConfig::validate() const {
  if (states == 0 || states > kStateCount) throw DataError("synthetic expert: states must lie in [1,256]");
  if (demos == 0) throw DataError("synthetic expert: demos must be positive");
  if (!(sharpness > 0.0) || !std::isfinite(sharpness)) throw DataError("synthetic expert: sharpness must be positive");
}

SyntheticExpert make_synthetic_expert(const SyntheticExpertConfig& config) {
  config.validate();
  SyntheticExpert out;
  out.truth = init_params(config.seed);

  Rng rng(derive_seed(config.seed, 100));
  std::vector<std::size_t> ids(kStateCount);
  std::iota(ids.begin(), ids.end(), 0);
  for (std::size_t i = kStateCount - 1; i > 0; --i) std::swap(ids[i], ids[rng.below(i + 1)]);
  ids.resize(config.states);
  std::sort(ids.begin(), ids.end());
  for (std::size_t id : ids) out.support.push_back(StateId::unchecked(id));

  double sq = 0.0;
  {
    const NetworkReward raw(out.truth);
    for (StateId s : out.support) {
      const double gap = raw.reward(s, Action::kSafe) - raw.reward(s, Action::kUnsafe);
      sq += gap * gap;
    }
  }
  const double rms = std::sqrt(sq / static_cast<double>(out.support.size()));
  if (!(rms > 0.0)) throw NumericalError("synthetic expert: ground-truth network has no reward gap");
  auto& last = out.truth.net.layers.back();
  const double factor = config.sharpness / rms;
  for (double& w : last.weights) w *= factor;
  for (double& b : last.biases) b *= factor;

  const NetworkReward truth(out.truth);
  std::vector<double> weights(kStateCount, 0.0);
  for (StateId s : out.support) weights[s.value()] = 1.0;
  const StateSampler sampler = StateSampler::from_weights(weights);
  out.softmax_demos = sample_demonstrations(truth, sampler, config.demos, rng, SamplingMode::kSoftmax);
  out.greedy_demos = regenerate_greedy(truth, out.softmax_demos);
  return out;
}

}  // namespace streetsafe
