#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streetsafe/medirl.hpp"
#include "streetsafe/reward.hpp"
#include "streetsafe/rl.hpp"

namespace streetsafe {

/// Classification tallies with unsafe as the positive class.
struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
};

/// `true` marks the positive (unsafe) class. Throws DataError on a length
/// mismatch or empty input.
ConfusionCounts confusion(std::span<const bool> predictions, std::span<const bool> labels);

struct F1Result {
  double value = 0.0;
  /// precision + recall was zero and the value is 0 by convention.
  bool degenerate = false;
};

F1Result f1_score(const ConfusionCounts& counts);
F1Result f1_score(std::span<const bool> predictions, std::span<const bool> labels);

/// Mann-Whitney AUC: share of (positive, negative) pairs where the positive
/// scores higher, ties counted 1/2. Throws DataError unless both classes
/// are present.
double auc(std::span<const double> scores, std::span<const bool> labels);

/// Fraction of demonstrations whose action equals policy(state).
double learned_behavior_accuracy(const GreedyPolicy& policy, const DemonstrationSet& demos);

struct MetricsReport {
  std::string setting = "full";
  double f1 = 0.0;
  bool f1_degenerate = false;
  std::optional<double> auc;  // empty when the labels hold one class
  double learned_behavior_accuracy = 0.0;
  std::int64_t n_items = 0;
  std::string fingerprint;
};

/// Scores the solver policy on `demos`: predictions are policy(state),
/// labels the demonstrated actions, AUC scores pi(unsafe | state) under the
/// softmax of `reward`.
MetricsReport evaluate(const GreedyPolicy& policy, const RewardSource& reward, const DemonstrationSet& demos);

struct PipelineConfig {
  TrainConfig irl;
  D3qnConfig solver;
  bool uniform_sampler = false;  // otherwise start states follow the demonstrations
};

struct PipelineResult {
  TrainResult irl;
  D3qnResult solver;
  MetricsReport metrics;
};

/// MEDIRL on `demos`, then D3QN under the recovered reward, then evaluate.
PipelineResult run_pipeline(const DemonstrationSet& demos, const PipelineConfig& config);

/// D3QN under a given reward (for example the hand-crafted expert), then
/// evaluate against `demos`.
struct SolverRun {
  D3qnResult solver;
  MetricsReport metrics;
};
SolverRun run_solver(const RewardSource& reward, const DemonstrationSet& demos, const PipelineConfig& config);

/// Copy of `demos` with bit `position` cleared in every state.
DemonstrationSet zero_feature(const DemonstrationSet& demos, std::size_t position);

/// Zeroes the feature's bit in every demonstration, reruns the pipeline
/// with the same seeds and reports metrics against the ablated data.
MetricsReport ablate(Feature feature, const PipelineConfig& config, const DemonstrationSet& demos,
                     const FeatureOrder& order = kDefaultFeatureOrder);

struct AblationReport {
  std::vector<MetricsReport> rows;  // "full" first, then "minus_<feature>" in feature order

  const MetricsReport& full() const { return rows.front(); }
  const MetricsReport* find(std::string_view setting) const;
};

AblationReport ablation_report(const PipelineConfig& config, const DemonstrationSet& demos,
                               const FeatureOrder& order = kDefaultFeatureOrder);

/// Per-feature signed reward contribution R(s, a) - R(s with bit cleared, a).
struct AttributionReport {
  std::string source;
  StateId state;
  Action action = Action::kSafe;
  double reward = 0.0;
  double zero_state_reward = 0.0;
  FeatureOrder order = kDefaultFeatureOrder;
  std::array<double, kFeatureCount> contributions{};  // by bit position
};

AttributionReport attribute(const RewardSource& reward, StateId state, Action action,
                            const FeatureOrder& order = kDefaultFeatureOrder);

/// setting,f1,auc,learned_behavior_accuracy,n_items,fingerprint
void write_metrics(std::ostream& out, std::span<const MetricsReport> rows);
/// image_id,source,action,feature,contribution,fingerprint; one row per
/// feature and report.
void write_attributions(std::ostream& out, const std::string& image_id, std::span<const AttributionReport> reports,
                        std::string_view fingerprint = {});

}  // namespace streetsafe
