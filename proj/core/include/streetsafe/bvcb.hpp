#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "streetsafe/common.hpp"
#include "streetsafe/features.hpp"

namespace streetsafe {

/// Index of a binary state in [0, 255].
class StateId {
 public:
  constexpr StateId() = default;
  /// Throws DataError when `id` is outside [0, 255].
  static StateId from_int(long long id);
  static constexpr StateId unchecked(std::size_t id) { return StateId(static_cast<std::uint16_t>(id)); }

  constexpr std::size_t value() const { return value_; }
  friend constexpr bool operator==(StateId, StateId) = default;
  friend constexpr auto operator<=>(StateId, StateId) = default;

 private:
  constexpr explicit StateId(std::uint16_t v) : value_(v) {}
  std::uint16_t value_ = 0;
};

/// Eight bits in feature-order positions; 1 marks the unsafer side.
struct StateVector {
  std::array<std::uint8_t, kFeatureCount> bits{};
  friend bool operator==(const StateVector&, const StateVector&) = default;
};

/// Which side of the threshold is the unsafe one, per feature (indexed by
/// Feature, not bit position).
using Polarity = std::array<bool, kFeatureCount>;

/// greenery/sky/sidewalk high is safe; wall/fence/entropy/car_count high is
/// unsafe; wire presence is unsafe.
Polarity default_polarity();

struct EncoderConfig {
  static constexpr int kBitOrderVersion = 1;

  int bit_order_version = kBitOrderVersion;
  FeatureOrder feature_order = kDefaultFeatureOrder;
  /// Indexed by Feature. The wire entry is unused (the feature is binary).
  std::array<double, kFeatureCount> thresholds{};
  /// Indexed by Feature: true when values above the threshold are unsafe.
  Polarity high_is_unsafe = default_polarity();

  void validate() const;
};

/// Per-feature arithmetic mean over the table, summed in sorted order so
/// the result does not depend on row order.
EncoderConfig fit_thresholds(const FeatureTable& table, const Polarity& polarity,
                             const FeatureOrder& order = kDefaultFeatureOrder);

/// Values strictly above the threshold are the high side; ties are low.
StateVector encode(const FeatureVector& features, const EncoderConfig& config);

/// id = sum bits[k] * 2^k.
StateId state_id(const StateVector& state);
StateVector decode(StateId id);

/// Bits as reals, in bit-position order.
std::array<double, kFeatureCount> as_input(const StateVector& state);

/// Returns `id` with bit `position` cleared.
StateId clear_bit(StateId id, std::size_t position);

std::string serialize(const EncoderConfig& config, std::string_view fingerprint = {});
EncoderConfig parse_encoder_config(const std::string& text, const std::string& source = "encoder config");
void save_encoder_config(const std::filesystem::path& path, const EncoderConfig& config, std::string_view fingerprint = {});
EncoderConfig load_encoder_config(const std::filesystem::path& path);

/// Overrides as a JSON object {"sky": "high_unsafe" | "high_safe", ...}
/// applied on top of `base`.
Polarity parse_polarity_overrides(const std::string& json_text, Polarity base = default_polarity());

}  // namespace streetsafe
