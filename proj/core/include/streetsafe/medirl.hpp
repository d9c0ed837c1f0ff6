#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "streetsafe/bvcb.hpp"
#include "streetsafe/optimizer.hpp"
#include "streetsafe/reward.hpp"
#include "streetsafe/trueskill.hpp"

namespace streetsafe {

/// One-step expert behaviour: the action taken at a state.
struct Demonstration {
  StateId state;
  Action action = Action::kSafe;
  friend bool operator==(const Demonstration&, const Demonstration&) = default;
};

/// Demonstrations with their visit counts N(s) and N(s, a).
class DemonstrationSet {
 public:
  DemonstrationSet() = default;
  explicit DemonstrationSet(std::vector<Demonstration> items);

  void add(const Demonstration& d);
  const std::vector<Demonstration>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  std::int64_t visits(StateId s) const { return visits_[s.value()]; }
  std::int64_t count(StateId s, Action a) const { return joint_[s.value()][index(a)]; }
  /// Visited states in increasing id order.
  std::vector<StateId> visited_states() const;

 private:
  std::vector<Demonstration> items_;
  std::array<std::int64_t, kStateCount> visits_{};
  std::array<std::array<std::int64_t, kActionCount>, kStateCount> joint_{};
};

/// 256 x 2 probabilities; rows outside the support mask are undefined and
/// held at zero.
struct PolicyTable {
  std::array<std::array<double, kActionCount>, kStateCount> probabilities{};
  std::array<bool, kStateCount> defined{};

  double operator()(StateId s, Action a) const { return probabilities[s.value()][index(a)]; }
};

struct EmpiricalPolicy {
  PolicyTable joint;                             // N(s,a) / N
  std::array<double, kStateCount> state_weight{}; // N(s) / N
  PolicyTable conditional;                       // N(s,a) / N(s), visited states only
};

EmpiricalPolicy empirical_policy(const DemonstrationSet& demos);

/// Per-state softmax over the two action rewards (max-subtracted).
PolicyTable maxent_policy(const RewardTable& rewards);
PolicyTable maxent_policy(const RewardNetParams& params);

/// dL/dR(s, a) = joint(s, a) - state_weight(s) * conditional(a | s).
RewardTable reward_gradient(const PolicyTable& empirical_joint, std::span<const double> state_weight,
                            const PolicyTable& conditional);

/// (1/N) sum_i log pi(a_i | s_i) under the softmax of `rewards`.
double log_likelihood(const RewardTable& rewards, const DemonstrationSet& demos);
double log_likelihood(const RewardNetParams& params, const DemonstrationSet& demos);

/// Exact dL/dtheta: reward_gradient chained through backward() for every
/// visited state. Unvisited states contribute nothing.
MlpParams loss_gradient(const RewardNetParams& params, const DemonstrationSet& demos);

struct TrainConfig {
  int max_epochs = 5000;
  double tolerance = 1e-6;  // on the parameter-gradient norm
  std::uint64_t seed = 0;   // network initialisation
  AdamConfig optimizer;
  int log_every = 100;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double log_likelihood = 0.0;  // before this epoch's update
  double grad_norm = 0.0;
  double agreement = 0.0;  // greedy maxent policy vs demonstrations
};

struct TrainResult {
  RewardNetParams params;
  std::vector<EpochRecord> history;
  bool converged = false;
};

using TrainProgress = std::function<void(const EpochRecord&)>;

/// Full-batch maximum-entropy fitting of the reward network. `progress`
/// is called every `log_every` epochs.
TrainResult train(const DemonstrationSet& demos, const TrainConfig& config, const TrainProgress& progress = {});

/// Greedy action of a policy row; ties go to safe.
Action greedy_action(const PolicyTable& policy, StateId s);

/// Fraction of demonstrations whose action matches the greedy action of
/// `policy` at their state.
double policy_agreement(const PolicyTable& policy, const DemonstrationSet& demos);

/// Image ids paired with their encoded states, in feature-table order.
using StateAssignments = std::vector<std::pair<std::string, StateId>>;

/// One demonstration per labelled image found in both inputs. When
/// `replicate_by_games` is given, each image is repeated once per
/// comparison it took part in (at least once).
DemonstrationSet demonstrations_from_labels(const StateAssignments& states, const LabelSet& labels,
                                            const RatingTable* replicate_by_games = nullptr);

/// Demonstration file: state_id,action.
void write_demonstrations(std::ostream& out, const DemonstrationSet& demos, std::string_view fingerprint = {});
DemonstrationSet load_demonstrations(const std::filesystem::path& path);

/// History export: epoch,log_likelihood,grad_norm,agreement.
void write_history(std::ostream& out, std::span<const EpochRecord> history, std::string_view fingerprint = {});

/// State file: image_id,state_id.
void write_states(std::ostream& out, const StateAssignments& states, std::string_view fingerprint = {});
StateAssignments load_states(const std::filesystem::path& path);

}  // namespace streetsafe
