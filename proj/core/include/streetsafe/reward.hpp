#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "streetsafe/bvcb.hpp"
#include "streetsafe/common.hpp"
#include "streetsafe/mlp.hpp"
#include "streetsafe/optimizer.hpp"

namespace streetsafe {

/// R(s, a) for every state and action.
using RewardTable = std::array<std::array<double, kActionCount>, kStateCount>;

/// Reward network [8, 32, 16, 32, 2]: tanh hidden layers, linear read-out,
/// one output channel per action.
inline constexpr std::array<std::size_t, 5> kRewardLayerSizes = {kFeatureCount, 32, 16, 32, kActionCount};

struct RewardNetParams {
  MlpParams net;
  std::uint64_t init_seed = 0;

  friend bool operator==(const RewardNetParams&, const RewardNetParams&) = default;
};

struct RewardOutput {
  std::array<double, kActionCount> values{};
  double operator[](Action a) const { return values[index(a)]; }
};

/// Glorot-uniform weights from Rng(seed), zero biases.
RewardNetParams init_params(std::uint64_t seed);
/// All weights and biases zero.
RewardNetParams zero_params();

RewardOutput forward(const RewardNetParams& params, const StateVector& state);
/// Variant that exposes the trace for inspection or reuse.
RewardOutput forward(const RewardNetParams& params, const StateVector& state, MlpTrace& trace);

/// Gradient of upstream . forward(params, state) with respect to every
/// parameter.
MlpParams backward(const RewardNetParams& params, const StateVector& state,
                   const std::array<double, kActionCount>& upstream);

/// Parameter file (JSON). `optimizer` records the training settings used.
std::string serialize(const RewardNetParams& params, const std::optional<AdamConfig>& optimizer = std::nullopt,
                      std::string_view fingerprint = {});
RewardNetParams parse_reward_params(const std::string& text, const std::string& source = "reward parameters");
void save_reward_params(const std::filesystem::path& path, const RewardNetParams& params,
                        const std::optional<AdamConfig>& optimizer = std::nullopt, std::string_view fingerprint = {});
RewardNetParams load_reward_params(const std::filesystem::path& path);

/// Hand-designed reward: each feature contributes +weight on its safe
/// side and -weight on its unsafe side; the action earns +bonus when it
/// agrees with the sign of the summed contributions (a positive sum means
/// safe) and -bonus otherwise.
struct ExpertRewardConfig {
  std::array<double, kFeatureCount> weights{};  // by bit position
  double consistency_bonus = 0.0;
  FeatureOrder feature_order = kDefaultFeatureOrder;

  void validate() const;
};

/// JSON: {"weights": {"greenery": w, ...all eight...}, "consistency_bonus": b}.
ExpertRewardConfig parse_expert_reward(const std::string& text, const FeatureOrder& order = kDefaultFeatureOrder,
                                       const std::string& source = "expert reward");
ExpertRewardConfig load_expert_reward(const std::filesystem::path& path, const FeatureOrder& order = kDefaultFeatureOrder);

/// Signed per-feature contributions, by bit position.
std::array<double, kFeatureCount> expert_contributions(const StateVector& state, const ExpertRewardConfig& config);
double expert_reward(const StateVector& state, Action action, const ExpertRewardConfig& config);

/// Anything that assigns a reward to a (state, action) pair.
class RewardSource {
 public:
  virtual ~RewardSource() = default;
  virtual double reward(StateId state, Action action) const = 0;
  virtual std::string name() const = 0;
};

RewardTable tabulate(const RewardSource& source);

/// Recovered network; rewards are tabulated once at construction.
class NetworkReward final : public RewardSource {
 public:
  explicit NetworkReward(RewardNetParams params);
  double reward(StateId state, Action action) const override { return table_[state.value()][index(action)]; }
  std::string name() const override { return "irl"; }
  const RewardNetParams& params() const { return params_; }
  const RewardTable& table() const { return table_; }

 private:
  RewardNetParams params_;
  RewardTable table_{};
};

class ExpertReward final : public RewardSource {
 public:
  explicit ExpertReward(ExpertRewardConfig config);
  double reward(StateId state, Action action) const override;
  std::string name() const override { return "expert"; }
  const ExpertRewardConfig& config() const { return config_; }

 private:
  ExpertRewardConfig config_;
};

/// R(s, a) = bias[a] + sum_k weight[a][k] * bit_k.
class LinearReward final : public RewardSource {
 public:
  LinearReward(std::array<std::array<double, kFeatureCount>, kActionCount> weights,
               std::array<double, kActionCount> bias = {});
  double reward(StateId state, Action action) const override;
  std::string name() const override { return "linear"; }
  double weight(Action a, std::size_t bit) const { return weights_[index(a)][bit]; }

 private:
  std::array<std::array<double, kFeatureCount>, kActionCount> weights_;
  std::array<double, kActionCount> bias_;
};

class TableReward final : public RewardSource {
 public:
  explicit TableReward(const RewardTable& table, std::string name = "table") : table_(table), name_(std::move(name)) {}
  double reward(StateId state, Action action) const override { return table_[state.value()][index(action)]; }
  std::string name() const override { return name_; }

 private:
  RewardTable table_;
  std::string name_;
};

}  // namespace streetsafe
