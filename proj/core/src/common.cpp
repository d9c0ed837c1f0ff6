#include "streetsafe/common.hpp"

#include <algorithm>
#include <limits>

namespace streetsafe {

namespace {

constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "greenery", "sky", "wall", "fence", "sidewalk", "wire", "entropy", "car_count",
};

}  // namespace

std::string_view to_string(Action a) { return a == Action::kSafe ? "safe" : "unsafe"; }

std::optional<Action> try_parse_action(std::string_view text) {
  if (text == "safe") return Action::kSafe;
  if (text == "unsafe") return Action::kUnsafe;
  return std::nullopt;
}

Action parse_action(std::string_view text) {
  if (auto a = try_parse_action(text)) return *a;
  throw DataError("unknown action '" + std::string(text) + "' (expected safe or unsafe)");
}

std::string_view to_string(Feature f) { return kFeatureNames[index(f)]; }

std::optional<Feature> try_parse_feature(std::string_view name) {
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (kFeatureNames[i] == name) return static_cast<Feature>(i);
  }
  return std::nullopt;
}

Feature parse_feature(std::string_view name) {
  if (auto f = try_parse_feature(name)) return *f;
  throw DataError("unknown feature '" + std::string(name) + "'");
}

std::size_t bit_position(const FeatureOrder& order, Feature f) {
  auto it = std::find(order.begin(), order.end(), f);
  if (it == order.end()) throw DataError("feature '" + std::string(to_string(f)) + "' missing from feature order");
  return static_cast<std::size_t>(it - order.begin());
}

void validate_feature_order(const FeatureOrder& order) {
  std::array<bool, kFeatureCount> seen{};
  for (Feature f : order) {
    const std::size_t i = index(f);
    if (i >= kFeatureCount) throw DataError("feature order holds an out-of-range feature");
    if (seen[i]) throw DataError("feature '" + std::string(to_string(f)) + "' appears twice in feature order");
    seen[i] = true;
  }
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below requires n > 0");
  // Rejection sampling keeps the result exactly uniform.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - (std::numeric_limits<std::uint64_t>::max() % n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace streetsafe
