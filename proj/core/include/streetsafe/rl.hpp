#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "streetsafe/bvcb.hpp"
#include "streetsafe/medirl.hpp"
#include "streetsafe/mlp.hpp"
#include "streetsafe/optimizer.hpp"
#include "streetsafe/reward.hpp"

namespace streetsafe {

/// Distribution over start states.
class StateSampler {
 public:
  static StateSampler uniform();
  /// p(s) = N(s) / N from the demonstrations.
  static StateSampler empirical(const DemonstrationSet& demos);
  /// Normalises `weights`; throws DataError if they do not sum to a
  /// positive finite value.
  static StateSampler from_weights(std::span<const double> weights);

  double probability(StateId s) const { return probabilities_[s.value()]; }
  StateId sample(Rng& rng) const;

 private:
  std::array<double, kStateCount> probabilities_{};
  std::array<double, kStateCount> cumulative_{};
};

struct Transition {
  StateId state;
  Action action = Action::kSafe;
  double reward = 0.0;
  bool terminal = true;
  std::optional<StateId> next_state;  // only for non-terminal transitions
};

/// One-step environment: reset draws a start state, step ends the episode.
/// The reward source must outlive the environment.
class SingleStepEnv {
 public:
  SingleStepEnv(StateSampler sampler, const RewardSource& reward, std::uint64_t seed);

  StateId reset();
  Transition step(StateId state, Action action) const;

  const RewardSource& reward_source() const { return *reward_; }
  const StateSampler& sampler() const { return sampler_; }

 private:
  StateSampler sampler_;
  const RewardSource* reward_;
  Rng rng_;
};

/// Fixed-capacity ring of transitions with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(const Transition& t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return items_[i]; }
  /// `n` indices drawn uniformly with replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> items_;
};

/// Dueling Q-network: trunk [8, 32, 16] (tanh), value head 16 -> 1,
/// advantage head 16 -> 2, Q = V + A - mean(A).
struct QNetParams {
  MlpParams trunk;
  MlpParams value_head;
  MlpParams advantage_head;
};

QNetParams init_qnet(std::uint64_t seed);

struct QValues {
  double value = 0.0;
  std::array<double, kActionCount> advantage{};
  std::array<double, kActionCount> q{};
};

struct QTrace {
  MlpTrace trunk;
  MlpTrace value;
  MlpTrace advantage;
};

QValues q_forward(const QNetParams& net, const StateVector& state, QTrace& trace);
QValues q_forward(const QNetParams& net, const StateVector& state);

/// Accumulates the gradient of upstream . q into `grad`.
void q_backward(const QNetParams& net, const QTrace& trace, const std::array<double, kActionCount>& upstream,
                QNetParams& grad);

/// One action per state, plus the values the choice was made from.
struct GreedyPolicy {
  std::array<Action, kStateCount> actions{};
  std::array<std::array<double, kActionCount>, kStateCount> values{};
  /// States where both values were equal and the safe tie-break fired.
  std::vector<StateId> ties;

  Action operator()(StateId s) const { return actions[s.value()]; }
};

/// argmax_a R(s, a) for every state; ties go to safe.
GreedyPolicy exact_policy(const RewardSource& reward);
GreedyPolicy greedy_policy(const QNetParams& net);

struct D3qnConfig {
  int episodes = 20000;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_decay_fraction = 0.5;  // of the episode budget
  std::size_t buffer_capacity = 10000;
  std::size_t batch_size = 32;
  int target_sync_period = 250;  // gradient steps
  double learning_rate = 1e-3;
  double gamma = 0.99;
  std::uint64_t seed = 0;
  int eval_every = 500;  // for the evaluation callback

  void validate() const;
};

/// Linear decay from start to end over the first `decay_fraction` of the
/// budget, constant afterwards.
double epsilon_at(const D3qnConfig& config, int episode);

struct EpisodeRecord {
  int episode = 0;
  double epsilon = 0.0;
  double reward = 0.0;
  /// 1 when this episode's action matched the exact one-step optimum.
  double agreement = 0.0;
};

struct D3qnResult {
  GreedyPolicy policy;
  QNetParams online;
  std::vector<EpisodeRecord> trace;
  std::vector<Transition> replay;  // final buffer contents
};

using D3qnCallback = std::function<void(int episode, const GreedyPolicy& policy)>;

/// Double-DQN target: r for terminal transitions, otherwise
/// r + gamma * Q_target(s', argmax_a Q_online(s', a)).
double td_target(const Transition& t, const QNetParams& online, const QNetParams& target, double gamma);

/// Epsilon-greedy collection, uniform replay, squared-error updates of the
/// online network toward td_target, periodic target sync.
D3qnResult d3qn_train(SingleStepEnv& env, const D3qnConfig& config, const D3qnCallback& on_eval = {});

/// Sum over `states` of expert_reward(state, policy(state)).
double total_expert_reward(const GreedyPolicy& policy, const ExpertRewardConfig& config,
                           std::span<const StateId> states);

/// Policy export: state_id,action,q_safe,q_unsafe.
void write_policy(std::ostream& out, const GreedyPolicy& policy, std::string_view fingerprint = {});
GreedyPolicy load_policy(const std::filesystem::path& path);
/// Trace export: episode,epsilon,reward,agreement_with_exact.
void write_trace(std::ostream& out, std::span<const EpisodeRecord> trace, std::string_view fingerprint = {});

}  // namespace streetsafe
