#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace streetsafe {

/// Input data failed validation. Messages name the file, line and column
/// when those are known.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numeric routine produced a non-finite value or failed to converge in a
/// way the caller must see.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Action : std::uint8_t { kSafe = 0, kUnsafe = 1 };

inline constexpr std::size_t kActionCount = 2;
inline constexpr std::array<Action, kActionCount> kActions = {Action::kSafe, Action::kUnsafe};

constexpr std::size_t index(Action a) { return static_cast<std::size_t>(a); }
constexpr Action other(Action a) { return a == Action::kSafe ? Action::kUnsafe : Action::kSafe; }

std::string_view to_string(Action a);
/// Accepts "safe" / "unsafe".
Action parse_action(std::string_view text);
std::optional<Action> try_parse_action(std::string_view text);

/// The eight street-view variables, in their canonical listing order.
enum class Feature : std::uint8_t {
  kGreenery = 0,
  kSky,
  kWall,
  kFence,
  kSidewalk,
  kWire,
  kEntropy,
  kCarCount,
};

inline constexpr std::size_t kFeatureCount = 8;
inline constexpr std::size_t kStateCount = std::size_t{1} << kFeatureCount;

inline constexpr std::array<Feature, kFeatureCount> kAllFeatures = {
    Feature::kGreenery, Feature::kSky,  Feature::kWall,    Feature::kFence,
    Feature::kSidewalk, Feature::kWire, Feature::kEntropy, Feature::kCarCount,
};

/// Bit position k of a state vector holds feature order[k].
using FeatureOrder = std::array<Feature, kFeatureCount>;
inline constexpr FeatureOrder kDefaultFeatureOrder = kAllFeatures;

constexpr std::size_t index(Feature f) { return static_cast<std::size_t>(f); }

std::string_view to_string(Feature f);
Feature parse_feature(std::string_view name);
std::optional<Feature> try_parse_feature(std::string_view name);

/// Position of `f` in `order`.
std::size_t bit_position(const FeatureOrder& order, Feature f);
/// Throws DataError unless `order` is a permutation of the eight features.
void validate_feature_order(const FeatureOrder& order);

/// Deterministic random source. The engine is the standard 64-bit Mersenne
/// twister; conversions to doubles and bounded integers are implemented
/// here rather than through <random> distributions so that sequences are
/// identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform in [0, n). `n` must be positive.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

/// Mixes a master seed with a stream tag into an independent child seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace streetsafe
