#include "streetsafe/reward.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "streetsafe/csv.hpp"

namespace streetsafe {

using nlohmann::json;

namespace {

constexpr std::string_view kParamsFormat = "streetsafe.reward_net";
constexpr int kParamsVersion = 1;

thread_local MlpTrace tls_trace;

}  // namespace

RewardNetParams init_params(std::uint64_t seed) {
  RewardNetParams p;
  p.net = make_mlp(kRewardLayerSizes);
  p.init_seed = seed;
  Rng rng(seed);
  glorot_uniform_init(p.net, rng);
  return p;
}

RewardNetParams zero_params() {
  RewardNetParams p;
  p.net = make_mlp(kRewardLayerSizes);
  return p;
}

RewardOutput forward(const RewardNetParams& params, const StateVector& state, MlpTrace& trace) {
  const auto x = as_input(state);
  const auto y = forward(params.net, x, OutputActivation::kLinear, trace);
  RewardOutput out;
  out.values = {y[0], y[1]};
  return out;
}

RewardOutput forward(const RewardNetParams& params, const StateVector& state) {
  return forward(params, state, tls_trace);
}

MlpParams backward(const RewardNetParams& params, const StateVector& state,
                   const std::array<double, kActionCount>& upstream) {
  MlpTrace trace;
  forward(params, state, trace);
  MlpParams grad = params.net;
  grad.set_zero();
  backward(params.net, trace, upstream, OutputActivation::kLinear, grad);
  return grad;
}

std::string serialize(const RewardNetParams& params, const std::optional<AdamConfig>& optimizer,
                      std::string_view fingerprint) {
  if (!params.net.all_finite()) throw NumericalError("refusing to serialize non-finite reward parameters");
  json doc;
  doc["format"] = kParamsFormat;
  doc["version"] = kParamsVersion;
  doc["layer_sizes"] = params.net.layer_sizes();
  doc["init_seed"] = params.init_seed;
  json layers = json::array();
  for (const auto& l : params.net.layers) {
    json rows = json::array();
    for (std::size_t r = 0; r < l.fan_out; ++r) {
      rows.push_back(std::vector<double>(l.weights.begin() + static_cast<std::ptrdiff_t>(r * l.fan_in),
                                         l.weights.begin() + static_cast<std::ptrdiff_t>((r + 1) * l.fan_in)));
    }
    layers.push_back({{"weights", rows}, {"biases", l.biases}});
  }
  doc["layers"] = layers;
  if (optimizer) {
    doc["optimizer"] = {{"kind", optimizer->plain_gradient ? "gradient_ascent" : "adam"},
                        {"learning_rate", optimizer->learning_rate},
                        {"beta1", optimizer->beta1},
                        {"beta2", optimizer->beta2},
                        {"epsilon", optimizer->epsilon}};
  }
  if (!fingerprint.empty()) doc["fingerprint"] = fingerprint;
  return doc.dump(1) + "\n";
}

RewardNetParams parse_reward_params(const std::string& text, const std::string& source) {
  RewardNetParams p;
  try {
    const json doc = json::parse(text);
    if (doc.value("format", std::string{}) != kParamsFormat) throw DataError("not a reward parameter document");
    if (doc.value("version", 0) != kParamsVersion) throw DataError("unsupported reward parameter version");
    const auto sizes = doc.at("layer_sizes").get<std::vector<std::size_t>>();
    if (sizes != std::vector<std::size_t>(kRewardLayerSizes.begin(), kRewardLayerSizes.end())) {
      throw DataError("layer_sizes must be [8,32,16,32,2]");
    }
    p.net = make_mlp(sizes);
    p.init_seed = doc.value("init_seed", std::uint64_t{0});
    const auto& layers = doc.at("layers");
    if (layers.size() != p.net.layers.size()) throw DataError("layer count does not match layer_sizes");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      auto& l = p.net.layers[k];
      const auto rows = layers[k].at("weights").get<std::vector<std::vector<double>>>();
      const auto biases = layers[k].at("biases").get<std::vector<double>>();
      if (rows.size() != l.fan_out || biases.size() != l.fan_out) throw DataError("layer " + std::to_string(k) + " has the wrong shape");
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != l.fan_in) throw DataError("layer " + std::to_string(k) + " row has the wrong width");
        for (std::size_t c = 0; c < l.fan_in; ++c) l.w(r, c) = rows[r][c];
      }
      l.biases = biases;
    }
  } catch (const json::exception& e) {
    throw DataError(source + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(source + ": " + e.what());
  }
  if (!p.net.all_finite()) throw DataError(source + ": non-finite parameter");
  return p;
}

void save_reward_params(const std::filesystem::path& path, const RewardNetParams& params,
                        const std::optional<AdamConfig>& optimizer, std::string_view fingerprint) {
  const std::string text = serialize(params, optimizer, fingerprint);
  auto out = csv::open_output(path);
  out << text;
}

RewardNetParams load_reward_params(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_reward_params(ss.str(), path.string());
}

void ExpertRewardConfig::validate() const {
  validate_feature_order(feature_order);
  for (double w : weights) {
    if (!std::isfinite(w)) throw DataError("expert reward weights must be finite");
  }
  if (!std::isfinite(consistency_bonus)) throw DataError("expert consistency bonus must be finite");
}

ExpertRewardConfig parse_expert_reward(const std::string& text, const FeatureOrder& order, const std::string& source) {
  ExpertRewardConfig c;
  c.feature_order = order;
  try {
    const json doc = json::parse(text);
    const auto& weights = doc.at("weights");
    if (!weights.is_object()) throw DataError("\"weights\" must be an object keyed by feature name");
    std::array<bool, kFeatureCount> seen{};
    for (const auto& [name, w] : weights.items()) {
      const std::size_t bit = bit_position(order, parse_feature(name));
      c.weights[bit] = w.get<double>();
      seen[bit] = true;
    }
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
      if (!seen[k]) throw DataError("missing weight for feature '" + std::string(to_string(order[k])) + "'");
    }
    c.consistency_bonus = doc.value("consistency_bonus", 0.0);
  } catch (const json::exception& e) {
    throw DataError(source + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(source + ": " + e.what());
  }
  c.validate();
  return c;
}

ExpertRewardConfig load_expert_reward(const std::filesystem::path& path, const FeatureOrder& order) {
  auto in = csv::open_input(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_expert_reward(ss.str(), order, path.string());
}

std::array<double, kFeatureCount> expert_contributions(const StateVector& state, const ExpertRewardConfig& config) {
  std::array<double, kFeatureCount> c{};
  for (std::size_t k = 0; k < kFeatureCount; ++k) c[k] = state.bits[k] == 0 ? config.weights[k] : -config.weights[k];
  return c;
}

double expert_reward(const StateVector& state, Action action, const ExpertRewardConfig& config) {
  double aggregate = 0.0;
  for (double v : expert_contributions(state, config)) aggregate += v;
  const Action expected = aggregate > 0.0 ? Action::kSafe : Action::kUnsafe;
  return aggregate + (action == expected ? config.consistency_bonus : -config.consistency_bonus);
}

RewardTable tabulate(const RewardSource& source) {
  RewardTable t{};
  for (std::size_t s = 0; s < kStateCount; ++s) {
    for (Action a : kActions) t[s][index(a)] = source.reward(StateId::unchecked(s), a);
  }
  return t;
}

NetworkReward::NetworkReward(RewardNetParams params) : params_(std::move(params)) {
  MlpTrace trace;
  for (std::size_t s = 0; s < kStateCount; ++s) {
    table_[s] = forward(params_, decode(StateId::unchecked(s)), trace).values;
  }
}

ExpertReward::ExpertReward(ExpertRewardConfig config) : config_(std::move(config)) { config_.validate(); }

double ExpertReward::reward(StateId state, Action action) const { return expert_reward(decode(state), action, config_); }

LinearReward::LinearReward(std::array<std::array<double, kFeatureCount>, kActionCount> weights,
                           std::array<double, kActionCount> bias)
    : weights_(weights), bias_(bias) {}

double LinearReward::reward(StateId state, Action action) const {
  const StateVector v = decode(state);
  double r = bias_[index(action)];
  for (std::size_t k = 0; k < kFeatureCount; ++k) r += weights_[index(action)][k] * v.bits[k];
  return r;
}

}  // namespace streetsafe
