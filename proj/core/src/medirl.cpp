#include "streetsafe/medirl.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <unordered_set>

#include "streetsafe/csv.hpp"

namespace streetsafe {

namespace {

std::array<double, kActionCount> softmax_row(const std::array<double, kActionCount>& r) {
  const double m = std::max(r[0], r[1]);
  const double e0 = std::exp(r[0] - m);
  const double e1 = std::exp(r[1] - m);
  const double z = e0 + e1;
  return {e0 / z, e1 / z};
}

std::array<double, kActionCount> log_softmax_row(const std::array<double, kActionCount>& r) {
  const double m = std::max(r[0], r[1]);
  const double lse = m + std::log(std::exp(r[0] - m) + std::exp(r[1] - m));
  return {r[0] - lse, r[1] - lse};
}

struct Objective {
  double log_likelihood = 0.0;
  double agreement = 0.0;
};

// Evaluates L and accumulates dL/dtheta into `grad` (zeroed here) using one
// forward/backward pass per visited state.
Objective evaluate_objective(const RewardNetParams& params, const DemonstrationSet& demos,
                             const std::vector<StateId>& visited, std::vector<MlpTrace>& traces, MlpParams& grad) {
  const double n = static_cast<double>(demos.size());
  grad.set_zero();
  Objective obj;
  std::int64_t matches = 0;
  for (std::size_t i = 0; i < visited.size(); ++i) {
    const StateId s = visited[i];
    const auto r = forward(params, decode(s), traces[i]).values;
    const auto pi = softmax_row(r);
    const auto log_pi = log_softmax_row(r);
    const double weight = static_cast<double>(demos.visits(s)) / n;
    std::array<double, kActionCount> upstream{};
    for (Action a : kActions) {
      const double joint = static_cast<double>(demos.count(s, a)) / n;
      obj.log_likelihood += joint * log_pi[index(a)];
      upstream[index(a)] = joint - weight * pi[index(a)];
    }
    const Action greedy = pi[index(Action::kSafe)] >= pi[index(Action::kUnsafe)] ? Action::kSafe : Action::kUnsafe;
    matches += demos.count(s, greedy);
    backward(params.net, traces[i], upstream, OutputActivation::kLinear, grad);
  }
  obj.agreement = static_cast<double>(matches) / n;
  return obj;
}

}  // namespace

DemonstrationSet::DemonstrationSet(std::vector<Demonstration> items) {
  items_.reserve(items.size());
  for (const auto& d : items) add(d);
}

void DemonstrationSet::add(const Demonstration& d) {
  items_.push_back(d);
  ++visits_[d.state.value()];
  ++joint_[d.state.value()][index(d.action)];
}

std::vector<StateId> DemonstrationSet::visited_states() const {
  std::vector<StateId> out;
  for (std::size_t s = 0; s < kStateCount; ++s) {
    if (visits_[s] > 0) out.push_back(StateId::unchecked(s));
  }
  return out;
}

EmpiricalPolicy empirical_policy(const DemonstrationSet& demos) {
  if (demos.empty()) throw DataError("empirical policy needs at least one demonstration");
  EmpiricalPolicy p;
  const double n = static_cast<double>(demos.size());
  for (std::size_t s = 0; s < kStateCount; ++s) {
    const StateId id = StateId::unchecked(s);
    const auto visits = demos.visits(id);
    p.joint.defined[s] = true;
    p.state_weight[s] = static_cast<double>(visits) / n;
    for (Action a : kActions) p.joint.probabilities[s][index(a)] = static_cast<double>(demos.count(id, a)) / n;
    if (visits > 0) {
      p.conditional.defined[s] = true;
      for (Action a : kActions) {
        p.conditional.probabilities[s][index(a)] = static_cast<double>(demos.count(id, a)) / static_cast<double>(visits);
      }
    }
  }
  return p;
}

PolicyTable maxent_policy(const RewardTable& rewards) {
  PolicyTable p;
  for (std::size_t s = 0; s < kStateCount; ++s) {
    p.probabilities[s] = softmax_row(rewards[s]);
    p.defined[s] = true;
  }
  return p;
}

PolicyTable maxent_policy(const RewardNetParams& params) { return maxent_policy(NetworkReward(params).table()); }

RewardTable reward_gradient(const PolicyTable& empirical_joint, std::span<const double> state_weight,
                            const PolicyTable& conditional) {
  if (state_weight.size() != kStateCount) throw std::invalid_argument("reward_gradient: state weights must have 256 entries");
  RewardTable g{};
  for (std::size_t s = 0; s < kStateCount; ++s) {
    if (state_weight[s] == 0.0) continue;
    for (std::size_t a = 0; a < kActionCount; ++a) {
      g[s][a] = empirical_joint.probabilities[s][a] - state_weight[s] * conditional.probabilities[s][a];
    }
  }
  return g;
}

double log_likelihood(const RewardTable& rewards, const DemonstrationSet& demos) {
  if (demos.empty()) throw DataError("log-likelihood needs at least one demonstration");
  const double n = static_cast<double>(demos.size());
  double total = 0.0;
  for (StateId s : demos.visited_states()) {
    const auto log_pi = log_softmax_row(rewards[s.value()]);
    for (Action a : kActions) total += static_cast<double>(demos.count(s, a)) / n * log_pi[index(a)];
  }
  return total;
}

double log_likelihood(const RewardNetParams& params, const DemonstrationSet& demos) {
  return log_likelihood(NetworkReward(params).table(), demos);
}

MlpParams loss_gradient(const RewardNetParams& params, const DemonstrationSet& demos) {
  if (demos.empty()) throw DataError("loss gradient needs at least one demonstration");
  const auto visited = demos.visited_states();
  std::vector<MlpTrace> traces(visited.size());
  MlpParams grad = params.net;
  evaluate_objective(params, demos, visited, traces, grad);
  return grad;
}

void TrainConfig::validate() const {
  if (max_epochs <= 0) throw DataError("max_epochs must be positive");
  if (!(tolerance > 0.0)) throw DataError("tolerance must be positive");
  if (log_every <= 0) throw DataError("log_every must be positive");
  optimizer.validate();
}

TrainResult train(const DemonstrationSet& demos, const TrainConfig& config, const TrainProgress& progress) {
  if (demos.empty()) throw DataError("train: no demonstrations");
  config.validate();
  TrainResult result;
  result.params = init_params(config.seed);
  OptimizerState opt = make_optimizer(result.params.net, config.optimizer);
  const auto visited = demos.visited_states();
  std::vector<MlpTrace> traces(visited.size());
  MlpParams grad = result.params.net;
  result.history.reserve(static_cast<std::size_t>(config.max_epochs));

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const Objective obj = evaluate_objective(result.params, demos, visited, traces, grad);
    if (!std::isfinite(obj.log_likelihood)) {
      throw NumericalError("non-finite log-likelihood at epoch " + std::to_string(epoch));
    }
    EpochRecord rec{epoch, obj.log_likelihood, std::sqrt(grad.squared_norm()), obj.agreement};
    result.history.push_back(rec);
    if (progress && (epoch % config.log_every == 0 || epoch == 1)) progress(rec);
    if (rec.grad_norm < config.tolerance) {
      result.converged = true;
      break;
    }
    try {
      apply_update(result.params.net, grad, opt, Direction::kAscent);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch));
    }
  }
  return result;
}

Action greedy_action(const PolicyTable& policy, StateId s) {
  const auto& row = policy.probabilities[s.value()];
  return row[index(Action::kSafe)] >= row[index(Action::kUnsafe)] ? Action::kSafe : Action::kUnsafe;
}

double policy_agreement(const PolicyTable& policy, const DemonstrationSet& demos) {
  if (demos.empty()) throw DataError("policy agreement needs at least one demonstration");
  std::int64_t matches = 0;
  for (const auto& d : demos.items()) matches += greedy_action(policy, d.state) == d.action ? 1 : 0;
  return static_cast<double>(matches) / static_cast<double>(demos.size());
}

DemonstrationSet demonstrations_from_labels(const StateAssignments& states, const LabelSet& labels,
                                            const RatingTable* replicate_by_games) {
  DemonstrationSet demos;
  for (const auto& [id, state] : states) {
    auto it = labels.entries.find(id);
    if (it == labels.entries.end()) continue;
    std::int64_t copies = 1;
    if (replicate_by_games) {
      if (const auto* r = replicate_by_games->find(id)) copies = std::max<std::int64_t>(1, r->games);
    }
    for (std::int64_t c = 0; c < copies; ++c) demos.add({state, it->second.label});
  }
  return demos;
}

void write_demonstrations(std::ostream& out, const DemonstrationSet& demos, std::string_view fingerprint) {
  if (!fingerprint.empty()) out << csv::fingerprint_comment(fingerprint);
  out << "state_id,action\n";
  for (const auto& d : demos.items()) out << d.state.value() << ',' << to_string(d.action) << '\n';
}

DemonstrationSet load_demonstrations(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  csv::LineReader reader(in, path.string());
  auto header = reader.next();
  if (!header || *header != "state_id,action") throw DataError(reader.where() + "header must be 'state_id,action'");
  DemonstrationSet demos;
  while (auto line = reader.next()) {
    if (line->empty()) continue;
    const auto f = csv::split(*line);
    if (f.size() != 2) throw DataError(reader.where() + "expected 2 columns");
    auto id = csv::parse_int(f[0]);
    if (!id || *id < 0 || *id >= static_cast<std::int64_t>(kStateCount)) {
      throw DataError(reader.where() + "column \"state_id\": expected an integer in [0,255]");
    }
    auto action = try_parse_action(f[1]);
    if (!action) throw DataError(reader.where() + "column \"action\": expected safe or unsafe");
    demos.add({StateId::from_int(*id), *action});
  }
  return demos;
}

void write_history(std::ostream& out, std::span<const EpochRecord> history, std::string_view fingerprint) {
  if (!fingerprint.empty()) out << csv::fingerprint_comment(fingerprint);
  out << "epoch,log_likelihood,grad_norm,agreement\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << csv::format_double(r.log_likelihood) << ',' << csv::format_double(r.grad_norm) << ','
        << csv::format_double(r.agreement) << '\n';
  }
}

void write_states(std::ostream& out, const StateAssignments& states, std::string_view fingerprint) {
  if (!fingerprint.empty()) out << csv::fingerprint_comment(fingerprint);
  out << "image_id,state_id\n";
  for (const auto& [id, s] : states) out << id << ',' << s.value() << '\n';
}

StateAssignments load_states(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  csv::LineReader reader(in, path.string());
  auto header = reader.next();
  if (!header || *header != "image_id,state_id") throw DataError(reader.where() + "header must be 'image_id,state_id'");
  StateAssignments states;
  std::unordered_set<std::string> seen;
  while (auto line = reader.next()) {
    if (line->empty()) continue;
    const auto f = csv::split(*line);
    if (f.size() != 2) throw DataError(reader.where() + "expected 2 columns");
    auto id = csv::parse_int(f[1]);
    if (!id || *id < 0 || *id >= static_cast<std::int64_t>(kStateCount)) {
      throw DataError(reader.where() + "column \"state_id\": expected an integer in [0,255]");
    }
    std::string image(f[0]);
    if (!seen.insert(image).second) throw DataError(reader.where() + "duplicate image_id '" + image + "'");
    states.emplace_back(std::move(image), StateId::from_int(*id));
  }
  return states;
}

}  // namespace streetsafe
