#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "streetsafe/common.hpp"

namespace streetsafe {

/// Per-pixel class identifiers produced by an external semantic segmenter.
struct SegmentationMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<int> labels;  // row-major, width * height entries

  void validate() const;
};

/// Text form: first line "width height", then width*height integers.
SegmentationMap parse_segmentation_map(std::istream& in, const std::string& source);
SegmentationMap load_segmentation_map(const std::filesystem::path& path);

/// The eight visual measurements of one street-view image.
struct FeatureVector {
  double greenery = 0.0;
  double sky = 0.0;
  double wall = 0.0;
  double fence = 0.0;
  double sidewalk = 0.0;
  int wire = 0;
  double entropy = 0.0;  // bits
  std::int64_t car_count = 0;

  /// Value of `f` as a real number (wire and car_count are converted).
  double value(Feature f) const;

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Throws DataError naming the offending column.
void validate(const FeatureVector& v);

struct GeoPoint {
  double latitude = 0.0;
  double longitude = 0.0;
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

struct FeatureRow {
  std::string image_id;
  FeatureVector features;
  std::optional<GeoPoint> geo;
  friend bool operator==(const FeatureRow&, const FeatureRow&) = default;
};

struct FeatureTable {
  std::vector<FeatureRow> rows;
  bool has_geo = false;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
  const FeatureRow* find(std::string_view image_id) const;

  friend bool operator==(const FeatureTable&, const FeatureTable&) = default;
};

struct LoadOptions {
  /// When set, malformed rows are dropped and reported instead of failing
  /// the whole load.
  bool skip_malformed = false;
};

struct LoadReport {
  std::vector<std::string> skipped;  // one diagnostic per dropped row
};

FeatureTable parse_feature_table(std::istream& in, const std::string& source, const LoadOptions& options = {},
                                 LoadReport* report = nullptr);
FeatureTable load_feature_table(const std::filesystem::path& path, const LoadOptions& options = {},
                                LoadReport* report = nullptr);
/// Writes the canonical header and one row per image; `fingerprint` is
/// stamped as a leading comment when non-empty.
void write_feature_table(std::ostream& out, const FeatureTable& table, std::string_view fingerprint = {});

/// Fraction of pixels whose label is in `class_ids`.
double compute_fov(const SegmentationMap& map, const std::set<int>& class_ids);

inline constexpr std::size_t kHistogramBins = 256;

/// Shannon entropy in bits of an 8-bit grayscale histogram.
double compute_visual_entropy(std::span<const std::uint64_t> histogram);

std::vector<std::uint64_t> load_histogram(const std::filesystem::path& path);

/// Cover ratios are keyed by feature name ("greenery", "sky", "wall",
/// "fence", "sidewalk"); absent names count as 0.
FeatureVector assemble_features(const std::map<std::string, double>& fov_by_class, bool wire_present,
                                double entropy, std::int64_t car_count);

/// Segmentation class ids that make up each cover-ratio feature.
struct ClassMapping {
  std::map<std::string, std::set<int>> classes;

  /// JSON object: {"greenery": [ids...], "sky": [...], ...}.
  static ClassMapping load(const std::filesystem::path& path);
  static ClassMapping parse(const std::string& json_text);
};

/// Cover ratios for every mapped feature of one segmentation map.
std::map<std::string, double> cover_ratios(const SegmentationMap& map, const ClassMapping& mapping);

}  // namespace streetsafe
