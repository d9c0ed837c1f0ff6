#include "streetsafe/rl.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "streetsafe/csv.hpp"

namespace streetsafe {

namespace {

constexpr std::array<std::size_t, 3> kTrunkSizes = {kFeatureCount, 32, 16};
constexpr std::array<std::size_t, 2> kValueSizes = {16, 1};
constexpr std::array<std::size_t, 2> kAdvantageSizes = {16, kActionCount};

QNetParams zero_like(const QNetParams& net) {
  QNetParams g = net;
  g.trunk.set_zero();
  g.value_head.set_zero();
  g.advantage_head.set_zero();
  return g;
}

void scale(MlpParams& p, double s) {
  for (auto& l : p.layers) {
    for (double& v : l.weights) v *= s;
    for (double& v : l.biases) v *= s;
  }
}

Action argmax_safe_ties(const std::array<double, kActionCount>& v, bool* tie) {
  const double safe = v[index(Action::kSafe)];
  const double unsafe = v[index(Action::kUnsafe)];
  if (tie) *tie = safe == unsafe;
  return safe >= unsafe ? Action::kSafe : Action::kUnsafe;
}

}  // namespace

StateSampler StateSampler::from_weights(std::span<const double> weights) {
  if (weights.size() != kStateCount) throw DataError("state sampler needs 256 weights");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DataError("state sampler weights must be finite and non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw DataError("state sampler weights sum to zero");
  StateSampler s;
  double running = 0.0;
  for (std::size_t i = 0; i < kStateCount; ++i) {
    s.probabilities_[i] = weights[i] / total;
    running += s.probabilities_[i];
    s.cumulative_[i] = running;
  }
  // Pin the last non-empty bucket to 1 so sampling never falls off the end.
  for (std::size_t i = kStateCount; i-- > 0;) {
    s.cumulative_[i] = 1.0;
    if (s.probabilities_[i] > 0.0) break;
  }
  return s;
}

StateSampler StateSampler::uniform() {
  std::array<double, kStateCount> w;
  w.fill(1.0);
  return from_weights(w);
}

StateSampler StateSampler::empirical(const DemonstrationSet& demos) {
  if (demos.empty()) throw DataError("empirical sampler needs at least one demonstration");
  std::array<double, kStateCount> w{};
  for (std::size_t s = 0; s < kStateCount; ++s) w[s] = static_cast<double>(demos.visits(StateId::unchecked(s)));
  return from_weights(w);
}

StateId StateSampler::sample(Rng& rng) const {
  const double u = rng.uniform();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  std::size_t i = static_cast<std::size_t>(it - cumulative_.begin());
  if (i >= kStateCount) i = kStateCount - 1;
  // Skip zero-probability buckets that share a cumulative value.
  while (probabilities_[i] == 0.0 && i + 1 < kStateCount) ++i;
  return StateId::unchecked(i);
}

SingleStepEnv::SingleStepEnv(StateSampler sampler, const RewardSource& reward, std::uint64_t seed)
    : sampler_(std::move(sampler)), reward_(&reward), rng_(seed) {}

StateId SingleStepEnv::reset() { return sampler_.sample(rng_); }

Transition SingleStepEnv::step(StateId state, Action action) const {
  return Transition{state, action, reward_->reward(state, action), true, std::nullopt};
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw DataError("replay buffer capacity must be positive");
  items_.reserve(capacity);
}

void ReplayBuffer::push(const Transition& t) {
  if (items_.size() < capacity_) {
    items_.push_back(t);
  } else {
    items_[next_] = t;
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (items_.empty()) throw std::logic_error("sampling from an empty replay buffer");
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = static_cast<std::size_t>(rng.below(items_.size()));
  return idx;
}

QNetParams init_qnet(std::uint64_t seed) {
  QNetParams net{make_mlp(kTrunkSizes), make_mlp(kValueSizes), make_mlp(kAdvantageSizes)};
  Rng rng(seed);
  glorot_uniform_init(net.trunk, rng);
  glorot_uniform_init(net.value_head, rng);
  glorot_uniform_init(net.advantage_head, rng);
  return net;
}

QValues q_forward(const QNetParams& net, const StateVector& state, QTrace& trace) {
  const auto x = as_input(state);
  const auto h = forward(net.trunk, x, OutputActivation::kTanh, trace.trunk);
  const auto v = forward(net.value_head, h, OutputActivation::kLinear, trace.value);
  const auto a = forward(net.advantage_head, h, OutputActivation::kLinear, trace.advantage);
  QValues out;
  out.value = v[0];
  out.advantage = {a[0], a[1]};
  const double mean_adv = 0.5 * (a[0] + a[1]);
  for (std::size_t i = 0; i < kActionCount; ++i) out.q[i] = out.value + out.advantage[i] - mean_adv;
  return out;
}

QValues q_forward(const QNetParams& net, const StateVector& state) {
  thread_local QTrace trace;
  return q_forward(net, state, trace);
}

void q_backward(const QNetParams& net, const QTrace& trace, const std::array<double, kActionCount>& upstream,
                QNetParams& grad) {
  const double total = upstream[0] + upstream[1];
  const std::array<double, 1> d_value = {total};
  std::array<double, kActionCount> d_adv{};
  for (std::size_t i = 0; i < kActionCount; ++i) d_adv[i] = upstream[i] - 0.5 * total;
  std::vector<double> g_from_value, g_from_adv;
  backward(net.value_head, trace.value, d_value, OutputActivation::kLinear, grad.value_head, &g_from_value);
  backward(net.advantage_head, trace.advantage, d_adv, OutputActivation::kLinear, grad.advantage_head, &g_from_adv);
  for (std::size_t i = 0; i < g_from_value.size(); ++i) g_from_value[i] += g_from_adv[i];
  backward(net.trunk, trace.trunk, g_from_value, OutputActivation::kTanh, grad.trunk);
}

GreedyPolicy exact_policy(const RewardSource& reward) {
  GreedyPolicy p;
  for (std::size_t s = 0; s < kStateCount; ++s) {
    const StateId id = StateId::unchecked(s);
    p.values[s] = {reward.reward(id, Action::kSafe), reward.reward(id, Action::kUnsafe)};
    bool tie = false;
    p.actions[s] = argmax_safe_ties(p.values[s], &tie);
    if (tie) p.ties.push_back(id);
  }
  return p;
}

GreedyPolicy greedy_policy(const QNetParams& net) {
  GreedyPolicy p;
  QTrace trace;
  for (std::size_t s = 0; s < kStateCount; ++s) {
    const StateId id = StateId::unchecked(s);
    p.values[s] = q_forward(net, decode(id), trace).q;
    bool tie = false;
    p.actions[s] = argmax_safe_ties(p.values[s], &tie);
    if (tie) p.ties.push_back(id);
  }
  return p;
}

void D3qnConfig::validate() const {
  if (episodes <= 0) throw DataError("episodes must be positive");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0) || !(epsilon_end >= 0.0 && epsilon_end <= 1.0)) {
    throw DataError("epsilon values must lie in [0,1]");
  }
  if (!(epsilon_decay_fraction >= 0.0 && epsilon_decay_fraction <= 1.0)) throw DataError("epsilon decay fraction must lie in [0,1]");
  if (buffer_capacity == 0 || batch_size == 0) throw DataError("buffer capacity and batch size must be positive");
  if (target_sync_period <= 0) throw DataError("target sync period must be positive");
  if (!(learning_rate > 0.0)) throw DataError("learning rate must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DataError("gamma must lie in [0,1]");
  if (eval_every <= 0) throw DataError("eval_every must be positive");
}

double epsilon_at(const D3qnConfig& config, int episode) {
  const double horizon = config.epsilon_decay_fraction * static_cast<double>(config.episodes);
  if (horizon <= 0.0 || episode >= horizon) return config.epsilon_end;
  const double frac = static_cast<double>(episode) / horizon;
  return config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac;
}

double td_target(const Transition& t, const QNetParams& online, const QNetParams& target, double gamma) {
  if (t.terminal || !t.next_state) return t.reward;
  const StateVector next = decode(*t.next_state);
  bool tie = false;
  const Action a_star = argmax_safe_ties(q_forward(online, next).q, &tie);
  return t.reward + gamma * q_forward(target, next).q[index(a_star)];
}

D3qnResult d3qn_train(SingleStepEnv& env, const D3qnConfig& config, const D3qnCallback& on_eval) {
  config.validate();
  Rng rng(derive_seed(config.seed, 1));
  D3qnResult result;
  QNetParams online = init_qnet(derive_seed(config.seed, 0));
  QNetParams target = online;
  AdamConfig adam;
  adam.learning_rate = config.learning_rate;
  OptimizerState opt_trunk = make_optimizer(online.trunk, adam);
  OptimizerState opt_value = make_optimizer(online.value_head, adam);
  OptimizerState opt_adv = make_optimizer(online.advantage_head, adam);
  QNetParams grad = zero_like(online);
  ReplayBuffer buffer(config.buffer_capacity);
  const GreedyPolicy exact = exact_policy(env.reward_source());

  QTrace trace;
  std::int64_t gradient_steps = 0;
  result.trace.reserve(static_cast<std::size_t>(config.episodes));
  for (int episode = 0; episode < config.episodes; ++episode) {
    const double eps = epsilon_at(config, episode);
    const StateId s = env.reset();
    Action a;
    if (rng.uniform() < eps) {
      a = rng.below(2) == 0 ? Action::kSafe : Action::kUnsafe;
    } else {
      a = argmax_safe_ties(q_forward(online, decode(s), trace).q, nullptr);
    }
    const Transition tr = env.step(s, a);
    buffer.push(tr);
    result.trace.push_back({episode + 1, eps, tr.reward, a == exact(s) ? 1.0 : 0.0});

    if (buffer.size() >= config.batch_size) {
      const auto batch = buffer.sample_indices(config.batch_size, rng);
      grad.trunk.set_zero();
      grad.value_head.set_zero();
      grad.advantage_head.set_zero();
      double loss = 0.0;
      for (std::size_t i : batch) {
        const Transition& t = buffer[i];
        const double y = td_target(t, online, target, config.gamma);
        const QValues q = q_forward(online, decode(t.state), trace);
        const double err = q.q[index(t.action)] - y;
        loss += 0.5 * err * err;
        std::array<double, kActionCount> up{};
        up[index(t.action)] = err;
        q_backward(online, trace, up, grad);
      }
      if (!std::isfinite(loss)) throw NumericalError("non-finite Q loss at episode " + std::to_string(episode + 1));
      const double inv = 1.0 / static_cast<double>(batch.size());
      scale(grad.trunk, inv);
      scale(grad.value_head, inv);
      scale(grad.advantage_head, inv);
      apply_update(online.trunk, grad.trunk, opt_trunk, Direction::kDescent);
      apply_update(online.value_head, grad.value_head, opt_value, Direction::kDescent);
      apply_update(online.advantage_head, grad.advantage_head, opt_adv, Direction::kDescent);
      if (++gradient_steps % config.target_sync_period == 0) target = online;
    }
    if (on_eval && ((episode + 1) % config.eval_every == 0 || episode + 1 == config.episodes)) {
      on_eval(episode + 1, greedy_policy(online));
    }
  }
  result.policy = greedy_policy(online);
  result.online = std::move(online);
  result.replay.reserve(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) result.replay.push_back(buffer[i]);
  return result;
}

double total_expert_reward(const GreedyPolicy& policy, const ExpertRewardConfig& config, std::span<const StateId> states) {
  double total = 0.0;
  for (StateId s : states) total += expert_reward(decode(s), policy(s), config);
  return total;
}

void write_policy(std::ostream& out, const GreedyPolicy& policy, std::string_view fingerprint) {
  if (!fingerprint.empty()) out << csv::fingerprint_comment(fingerprint);
  out << "state_id,action,q_safe,q_unsafe\n";
  for (std::size_t s = 0; s < kStateCount; ++s) {
    out << s << ',' << to_string(policy.actions[s]) << ',' << csv::format_double(policy.values[s][0]) << ','
        << csv::format_double(policy.values[s][1]) << '\n';
  }
}

GreedyPolicy load_policy(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  csv::LineReader reader(in, path.string());
  auto header = reader.next();
  if (!header || *header != "state_id,action,q_safe,q_unsafe") {
    throw DataError(reader.where() + "header must be 'state_id,action,q_safe,q_unsafe'");
  }
  GreedyPolicy p;
  std::array<bool, kStateCount> seen{};
  while (auto line = reader.next()) {
    if (line->empty()) continue;
    const auto f = csv::split(*line);
    if (f.size() != 4) throw DataError(reader.where() + "expected 4 columns");
    auto id = csv::parse_int(f[0]);
    auto action = try_parse_action(f[1]);
    auto qs = csv::parse_double(f[2]);
    auto qu = csv::parse_double(f[3]);
    if (!id || *id < 0 || *id >= static_cast<std::int64_t>(kStateCount) || !action || !qs || !qu) {
      throw DataError(reader.where() + "invalid policy row");
    }
    const auto s = static_cast<std::size_t>(*id);
    if (seen[s]) throw DataError(reader.where() + "duplicate state_id");
    seen[s] = true;
    p.actions[s] = *action;
    p.values[s] = {*qs, *qu};
    if (*qs == *qu) p.ties.push_back(StateId::unchecked(s));
  }
  if (std::count(seen.begin(), seen.end(), true) != static_cast<std::ptrdiff_t>(kStateCount)) {
    throw DataError(path.string() + ": policy must list all 256 states");
  }
  return p;
}

void write_trace(std::ostream& out, std::span<const EpisodeRecord> trace, std::string_view fingerprint) {
  if (!fingerprint.empty()) out << csv::fingerprint_comment(fingerprint);
  out << "episode,epsilon,reward,agreement_with_exact\n";
  for (const auto& r : trace) {
    out << r.episode << ',' << csv::format_double(r.epsilon) << ',' << csv::format_double(r.reward) << ','
        << csv::format_double(r.agreement) << '\n';
  }
}

}  // namespace streetsafe
