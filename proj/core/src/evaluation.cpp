#include "streetsafe/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <ostream>

#include "streetsafe/csv.hpp"

namespace streetsafe {

ConfusionCounts confusion(std::span<const bool> predictions, std::span<const bool> labels) {
  if (predictions.size() != labels.size()) throw DataError("predictions and labels differ in length");
  if (predictions.empty()) throw DataError("metrics need at least one item");
  ConfusionCounts c;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i]) {
      ++(labels[i] ? c.tp : c.fp);
    } else {
      ++(labels[i] ? c.fn : c.tn);
    }
  }
  return c;
}

F1Result f1_score(const ConfusionCounts& c) {
  // 2PR/(P+R) reduces to 2tp / (2tp + fp + fn); zero tp means P + R = 0.
  if (c.tp == 0) return {0.0, true};
  const double tp = static_cast<double>(c.tp);
  return {2.0 * tp / (2.0 * tp + static_cast<double>(c.fp) + static_cast<double>(c.fn)), false};
}

F1Result f1_score(std::span<const bool> predictions, std::span<const bool> labels) {
  return f1_score(confusion(predictions, labels));
}

double auc(std::span<const double> scores, std::span<const bool> labels) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of midranks of the positives, computed exactly in half-units.
  std::int64_t pos = 0;
  std::int64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::int64_t group_pos = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      group_pos += labels[order[j]] ? 1 : 0;
      ++j;
    }
    // Ranks i+1..j, midrank (i+1+j)/2.
    twice_rank_sum += group_pos * static_cast<std::int64_t>(i + 1 + j);
    pos += group_pos;
    i = j;
  }
  const std::int64_t neg = static_cast<std::int64_t>(scores.size()) - pos;
  if (pos == 0 || neg == 0) throw DataError("AUC needs both classes present");
  const std::int64_t twice_u = twice_rank_sum - pos * (pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double learned_behavior_accuracy(const GreedyPolicy& policy, const DemonstrationSet& demos) {
  if (demos.empty()) throw DataError("learned behavior accuracy needs at least one demonstration");
  std::int64_t matches = 0;
  for (const auto& d : demos.items()) matches += policy(d.state) == d.action ? 1 : 0;
  return static_cast<double>(matches) / static_cast<double>(demos.size());
}

MetricsReport evaluate(const GreedyPolicy& policy, const RewardSource& reward, const DemonstrationSet& demos) {
  if (demos.empty()) throw DataError("evaluation needs at least one demonstration");
  const PolicyTable soft = maxent_policy(tabulate(reward));
  const std::size_t n = demos.size();
  // span<const bool> cannot view a vector<bool>.
  std::unique_ptr<bool[]> pred(new bool[n]), label(new bool[n]);
  std::vector<double> scores(n);
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& d = demos.items()[i];
    pred[i] = policy(d.state) == Action::kUnsafe;
    label[i] = d.action == Action::kUnsafe;
    positives += label[i] ? 1 : 0;
    scores[i] = soft(d.state, Action::kUnsafe);
  }
  const std::span<const bool> ps(pred.get(), n), ls(label.get(), n);

  MetricsReport r;
  const F1Result f1 = f1_score(ps, ls);
  r.f1 = f1.value;
  r.f1_degenerate = f1.degenerate;
  if (positives > 0 && positives < n) r.auc = auc(scores, ls);
  r.learned_behavior_accuracy = learned_behavior_accuracy(policy, demos);
  r.n_items = static_cast<std::int64_t>(n);
  return r;
}

namespace {

StateSampler pipeline_sampler(const DemonstrationSet& demos, const PipelineConfig& config) {
  return config.uniform_sampler ? StateSampler::uniform() : StateSampler::empirical(demos);
}

}  // namespace

SolverRun run_solver(const RewardSource& reward, const DemonstrationSet& demos, const PipelineConfig& config) {
  SingleStepEnv env(pipeline_sampler(demos, config), reward, derive_seed(config.solver.seed, 2));
  SolverRun run;
  run.solver = d3qn_train(env, config.solver);
  run.metrics = evaluate(run.solver.policy, reward, demos);
  return run;
}

PipelineResult run_pipeline(const DemonstrationSet& demos, const PipelineConfig& config) {
  PipelineResult result;
  result.irl = train(demos, config.irl);
  const NetworkReward reward(result.irl.params);
  SolverRun run = run_solver(reward, demos, config);
  result.solver = std::move(run.solver);
  result.metrics = run.metrics;
  return result;
}

DemonstrationSet zero_feature(const DemonstrationSet& demos, std::size_t position) {
  if (position >= kFeatureCount) throw DataError("bit position out of range");
  DemonstrationSet out;
  for (const auto& d : demos.items()) out.add({clear_bit(d.state, position), d.action});
  return out;
}

MetricsReport ablate(Feature feature, const PipelineConfig& config, const DemonstrationSet& demos,
                     const FeatureOrder& order) {
  const DemonstrationSet ablated = zero_feature(demos, bit_position(order, feature));
  MetricsReport r = run_pipeline(ablated, config).metrics;
  r.setting = "minus_" + std::string(to_string(feature));
  return r;
}

const MetricsReport* AblationReport::find(std::string_view setting) const {
  for (const auto& r : rows) {
    if (r.setting == setting) return &r;
  }
  return nullptr;
}

AblationReport ablation_report(const PipelineConfig& config, const DemonstrationSet& demos,
                               const FeatureOrder& order) {
  AblationReport report;
  report.rows.push_back(run_pipeline(demos, config).metrics);
  report.rows.back().setting = "full";
  for (Feature f : order) report.rows.push_back(ablate(f, config, demos, order));
  return report;
}

AttributionReport attribute(const RewardSource& reward, StateId state, Action action, const FeatureOrder& order) {
  AttributionReport r;
  r.source = reward.name();
  r.state = state;
  r.action = action;
  r.order = order;
  r.reward = reward.reward(state, action);
  r.zero_state_reward = reward.reward(StateId::unchecked(0), action);
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    r.contributions[k] = r.reward - reward.reward(clear_bit(state, k), action);
  }
  return r;
}

void write_metrics(std::ostream& out, std::span<const MetricsReport> rows) {
  out << "setting,f1,auc,learned_behavior_accuracy,n_items,fingerprint\n";
  for (const auto& r : rows) {
    out << r.setting << ',' << csv::format_double(r.f1) << ',' << (r.auc ? csv::format_double(*r.auc) : "") << ','
        << csv::format_double(r.learned_behavior_accuracy) << ',' << r.n_items << ',' << r.fingerprint << '\n';
  }
}

void write_attributions(std::ostream& out, const std::string& image_id, std::span<const AttributionReport> reports,
                        std::string_view fingerprint) {
  out << "image_id,source,action,feature,contribution,fingerprint\n";
  for (const auto& r : reports) {
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
      out << image_id << ',' << r.source << ',' << to_string(r.action) << ',' << to_string(r.order[k]) << ','
          << csv::format_double(r.contributions[k]) << ',' << fingerprint << '\n';
    }
  }
}

}  // namespace streetsafe
