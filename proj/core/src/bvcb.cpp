#include "streetsafe/bvcb.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "json.hpp"
#include "streetsafe/csv.hpp"

namespace streetsafe {

using nlohmann::json;

namespace {

constexpr std::string_view kFormat = "streetsafe.encoder";

bool is_continuous(Feature f) { return f != Feature::kWire; }

}  // namespace

StateId StateId::from_int(long long id) {
  if (id < 0 || id >= static_cast<long long>(kStateCount)) {
    throw DataError("state id " + std::to_string(id) + " outside [0,255]");
  }
  return StateId(static_cast<std::uint16_t>(id));
}

Polarity default_polarity() {
  Polarity p{};
  p[index(Feature::kGreenery)] = false;
  p[index(Feature::kSky)] = false;
  p[index(Feature::kWall)] = true;
  p[index(Feature::kFence)] = true;
  p[index(Feature::kSidewalk)] = false;
  p[index(Feature::kWire)] = true;
  p[index(Feature::kEntropy)] = true;
  p[index(Feature::kCarCount)] = true;
  return p;
}

void EncoderConfig::validate() const {
  if (bit_order_version != kBitOrderVersion) {
    throw DataError("unsupported bit_order_version " + std::to_string(bit_order_version));
  }
  validate_feature_order(feature_order);
  for (Feature f : kAllFeatures) {
    if (is_continuous(f) && !std::isfinite(thresholds[index(f)])) {
      throw DataError("threshold for '" + std::string(to_string(f)) + "' is not finite");
    }
  }
}

EncoderConfig fit_thresholds(const FeatureTable& table, const Polarity& polarity, const FeatureOrder& order) {
  if (table.empty()) throw DataError("cannot fit thresholds on an empty feature table");
  validate_feature_order(order);
  EncoderConfig config;
  config.feature_order = order;
  config.high_is_unsafe = polarity;
  std::vector<double> column(table.size());
  for (Feature f : kAllFeatures) {
    if (!is_continuous(f)) continue;
    for (std::size_t i = 0; i < table.size(); ++i) column[i] = table.rows[i].features.value(f);
    std::sort(column.begin(), column.end());
    double sum = 0.0;
    for (double v : column) sum += v;
    config.thresholds[index(f)] = sum / static_cast<double>(column.size());
  }
  config.thresholds[index(Feature::kWire)] = 0.0;
  return config;
}

StateVector encode(const FeatureVector& features, const EncoderConfig& config) {
  StateVector state;
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    const Feature f = config.feature_order[k];
    const bool high = is_continuous(f) ? features.value(f) > config.thresholds[index(f)] : features.wire == 1;
    state.bits[k] = (high == config.high_is_unsafe[index(f)]) ? 1 : 0;
  }
  return state;
}

StateId state_id(const StateVector& state) {
  std::size_t id = 0;
  for (std::size_t k = 0; k < kFeatureCount; ++k) id |= static_cast<std::size_t>(state.bits[k] & 1U) << k;
  return StateId::unchecked(id);
}

StateVector decode(StateId id) {
  StateVector state;
  for (std::size_t k = 0; k < kFeatureCount; ++k) state.bits[k] = static_cast<std::uint8_t>((id.value() >> k) & 1U);
  return state;
}

std::array<double, kFeatureCount> as_input(const StateVector& state) {
  std::array<double, kFeatureCount> x{};
  for (std::size_t k = 0; k < kFeatureCount; ++k) x[k] = static_cast<double>(state.bits[k]);
  return x;
}

StateId clear_bit(StateId id, std::size_t position) {
  return StateId::unchecked(id.value() & ~(std::size_t{1} << position));
}

std::string serialize(const EncoderConfig& config, std::string_view fingerprint) {
  config.validate();
  json doc;
  doc["format"] = kFormat;
  doc["bit_order_version"] = config.bit_order_version;
  json order = json::array();
  for (Feature f : config.feature_order) order.push_back(std::string(to_string(f)));
  doc["feature_order"] = order;
  json thresholds = json::object();
  json polarity = json::object();
  for (Feature f : kAllFeatures) {
    if (is_continuous(f)) thresholds[std::string(to_string(f))] = config.thresholds[index(f)];
    polarity[std::string(to_string(f))] = config.high_is_unsafe[index(f)] ? "high_unsafe" : "high_safe";
  }
  doc["thresholds"] = thresholds;
  doc["polarity"] = polarity;
  if (!fingerprint.empty()) doc["fingerprint"] = fingerprint;
  return doc.dump(2) + "\n";
}

EncoderConfig parse_encoder_config(const std::string& text, const std::string& source) {
  EncoderConfig config;
  try {
    const json doc = json::parse(text);
    if (doc.value("format", std::string{}) != kFormat) throw DataError("not an encoder config document");
    if (!doc.contains("bit_order_version")) throw DataError("missing bit_order_version");
    config.bit_order_version = doc.at("bit_order_version").get<int>();
    const auto& order = doc.at("feature_order");
    if (!order.is_array() || order.size() != kFeatureCount) throw DataError("feature_order must list exactly 8 features");
    for (std::size_t k = 0; k < kFeatureCount; ++k) config.feature_order[k] = parse_feature(order[k].get<std::string>());
    for (Feature f : kAllFeatures) {
      const std::string name(to_string(f));
      if (is_continuous(f)) config.thresholds[index(f)] = doc.at("thresholds").at(name).get<double>();
      const std::string side = doc.at("polarity").at(name).get<std::string>();
      if (side != "high_unsafe" && side != "high_safe") throw DataError("polarity for '" + name + "' must be high_unsafe or high_safe");
      config.high_is_unsafe[index(f)] = side == "high_unsafe";
    }
  } catch (const json::exception& e) {
    throw DataError(source + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(source + ": " + e.what());
  }
  config.validate();
  return config;
}

void save_encoder_config(const std::filesystem::path& path, const EncoderConfig& config, std::string_view fingerprint) {
  auto out = csv::open_output(path);
  out << serialize(config, fingerprint);
}

EncoderConfig load_encoder_config(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_encoder_config(ss.str(), path.string());
}

Polarity parse_polarity_overrides(const std::string& json_text, Polarity base) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw DataError(std::string("polarity overrides: ") + e.what());
  }
  if (!doc.is_object()) throw DataError("polarity overrides must be a JSON object");
  for (const auto& [name, side] : doc.items()) {
    const Feature f = parse_feature(name);
    if (!side.is_string() || (side != "high_unsafe" && side != "high_safe")) {
      throw DataError("polarity for '" + name + "' must be \"high_unsafe\" or \"high_safe\"");
    }
    base[index(f)] = side == "high_unsafe";
  }
  return base;
}

}  // namespace streetsafe
