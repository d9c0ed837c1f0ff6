#pragma once

#include <cstdint>
#include <vector>

#include "streetsafe/medirl.hpp"
#include "streetsafe/reward.hpp"
#include "streetsafe/rl.hpp"

namespace streetsafe {

enum class SamplingMode { kSoftmax, kGreedy };

/// Draws `n` states from `sampler`; actions follow the softmax of `reward`
/// or its argmax (ties to safe).
DemonstrationSet sample_demonstrations(const RewardSource& reward, const StateSampler& sampler, std::size_t n,
                                       Rng& rng, SamplingMode mode);

/// Same states as `demos`, actions replaced by argmax of `reward`.
DemonstrationSet regenerate_greedy(const RewardSource& reward, const DemonstrationSet& demos);

struct SyntheticExpertConfig {
  std::uint64_t seed = 7;
  std::size_t states = kStateCount;  // size of the support, drawn without replacement
  std::size_t demos = 5000;
  /// Target root-mean-square reward gap |R(s,safe) - R(s,unsafe)| over the
  /// support; the ground-truth network's output layer is rescaled to hit it.
  double sharpness = 6.0;

  void validate() const;
};

struct SyntheticExpert {
  RewardNetParams truth;
  std::vector<StateId> support;
  DemonstrationSet softmax_demos;
  DemonstrationSet greedy_demos;  // same states, argmax actions
};

SyntheticExpert make_synthetic_expert(const SyntheticExpertConfig& config);

}  // namespace streetsafe
