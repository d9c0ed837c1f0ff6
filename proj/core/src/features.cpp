#include "streetsafe/features.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "streetsafe/csv.hpp"

namespace streetsafe {

namespace {

constexpr std::array<std::string_view, 9> kColumns = {
    "image_id", "greenery", "sky", "wall", "fence", "sidewalk", "wire", "entropy", "car_count",
};
constexpr std::string_view kGeoColumns[] = {"lat", "lon"};

constexpr double kMaxEntropyBits = 8.0;

void check_ratio(double v, std::string_view column) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw DataError("column \"" + std::string(column) + "\": ratio " + csv::format_double(v) + " outside [0,1]");
  }
}

FeatureRow parse_row(std::string_view line, bool with_geo) {
  const auto fields = csv::split(line);
  const std::size_t expected = kColumns.size() + (with_geo ? 2 : 0);
  if (fields.size() != expected) {
    throw DataError("expected " + std::to_string(expected) + " columns, found " + std::to_string(fields.size()));
  }
  auto real = [&](std::size_t col) {
    auto v = csv::parse_double(fields[col]);
    if (!v) throw DataError("column \"" + std::string(col < kColumns.size() ? kColumns[col] : kGeoColumns[col - kColumns.size()]) +
                            "\": not a number: '" + std::string(fields[col]) + "'");
    return *v;
  };
  auto integer = [&](std::size_t col) {
    auto v = csv::parse_int(fields[col]);
    if (!v) throw DataError("column \"" + std::string(kColumns[col]) + "\": not an integer: '" + std::string(fields[col]) + "'");
    return *v;
  };

  FeatureRow row;
  row.image_id = std::string(fields[0]);
  if (row.image_id.empty()) throw DataError("column \"image_id\": empty");
  FeatureVector& f = row.features;
  f.greenery = real(1);
  f.sky = real(2);
  f.wall = real(3);
  f.fence = real(4);
  f.sidewalk = real(5);
  const auto wire = integer(6);
  if (wire != 0 && wire != 1) throw DataError("column \"wire\": expected 0 or 1, found " + std::to_string(wire));
  f.wire = static_cast<int>(wire);
  f.entropy = real(7);
  f.car_count = integer(8);
  validate(f);
  if (with_geo) row.geo = GeoPoint{real(9), real(10)};
  return row;
}

}  // namespace

void SegmentationMap::validate() const {
  if (width == 0 || height == 0) throw DataError("segmentation map must have positive width and height");
  if (labels.size() != width * height) {
    throw DataError("segmentation map has " + std::to_string(labels.size()) + " labels, expected " +
                    std::to_string(width * height));
  }
}

SegmentationMap parse_segmentation_map(std::istream& in, const std::string& source) {
  SegmentationMap map;
  long long w = 0, h = 0;
  if (!(in >> w >> h) || w <= 0 || h <= 0) throw DataError(source + ": first line must be 'width height' with positive values");
  map.width = static_cast<std::size_t>(w);
  map.height = static_cast<std::size_t>(h);
  map.labels.reserve(map.width * map.height);
  long long label = 0;
  while (in >> label) {
    if (label < 0) throw DataError(source + ": negative class id " + std::to_string(label));
    map.labels.push_back(static_cast<int>(label));
  }
  if (!in.eof()) throw DataError(source + ": non-integer token after " + std::to_string(map.labels.size()) + " labels");
  try {
    map.validate();
  } catch (const DataError& e) {
    throw DataError(source + ": " + e.what());
  }
  return map;
}

SegmentationMap load_segmentation_map(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  return parse_segmentation_map(in, path.string());
}

double FeatureVector::value(Feature f) const {
  switch (f) {
    case Feature::kGreenery: return greenery;
    case Feature::kSky: return sky;
    case Feature::kWall: return wall;
    case Feature::kFence: return fence;
    case Feature::kSidewalk: return sidewalk;
    case Feature::kWire: return static_cast<double>(wire);
    case Feature::kEntropy: return entropy;
    case Feature::kCarCount: return static_cast<double>(car_count);
  }
  return 0.0;
}

void validate(const FeatureVector& v) {
  check_ratio(v.greenery, "greenery");
  check_ratio(v.sky, "sky");
  check_ratio(v.wall, "wall");
  check_ratio(v.fence, "fence");
  check_ratio(v.sidewalk, "sidewalk");
  if (v.wire != 0 && v.wire != 1) throw DataError("column \"wire\": expected 0 or 1");
  if (!(v.entropy >= 0.0 && v.entropy <= kMaxEntropyBits)) {
    throw DataError("column \"entropy\": " + csv::format_double(v.entropy) + " bits outside [0,8]");
  }
  if (v.car_count < 0) throw DataError("column \"car_count\": negative count");
}

const FeatureRow* FeatureTable::find(std::string_view image_id) const {
  for (const auto& r : rows) {
    if (r.image_id == image_id) return &r;
  }
  return nullptr;
}

FeatureTable parse_feature_table(std::istream& in, const std::string& source, const LoadOptions& options,
                                 LoadReport* report) {
  csv::LineReader reader(in, source);
  auto header = reader.next();
  if (!header) throw DataError(source + ": empty feature file");

  std::string expected;
  for (std::size_t i = 0; i < kColumns.size(); ++i) expected += (i ? "," : "") + std::string(kColumns[i]);
  FeatureTable table;
  if (*header == expected + ",lat,lon") {
    table.has_geo = true;
  } else if (*header != expected) {
    throw DataError(reader.where() + "header must be '" + expected + "' (optionally followed by ',lat,lon')");
  }

  std::unordered_set<std::string> seen;
  while (auto line = reader.next()) {
    if (line->empty()) continue;
    try {
      FeatureRow row = parse_row(*line, table.has_geo);
      if (!seen.insert(row.image_id).second) throw DataError("duplicate image_id '" + row.image_id + "'");
      table.rows.push_back(std::move(row));
    } catch (const DataError& e) {
      std::string msg = reader.where() + e.what();
      if (!options.skip_malformed) throw DataError(msg);
      if (report) report->skipped.push_back(std::move(msg));
    }
  }
  return table;
}

FeatureTable load_feature_table(const std::filesystem::path& path, const LoadOptions& options, LoadReport* report) {
  auto in = csv::open_input(path);
  return parse_feature_table(in, path.string(), options, report);
}

void write_feature_table(std::ostream& out, const FeatureTable& table, std::string_view fingerprint) {
  if (!fingerprint.empty()) out << csv::fingerprint_comment(fingerprint);
  for (std::size_t i = 0; i < kColumns.size(); ++i) out << (i ? "," : "") << kColumns[i];
  if (table.has_geo) out << ",lat,lon";
  out << '\n';
  for (const auto& r : table.rows) {
    const auto& f = r.features;
    out << r.image_id << ',' << csv::format_double(f.greenery) << ',' << csv::format_double(f.sky) << ','
        << csv::format_double(f.wall) << ',' << csv::format_double(f.fence) << ',' << csv::format_double(f.sidewalk)
        << ',' << f.wire << ',' << csv::format_double(f.entropy) << ',' << f.car_count;
    if (table.has_geo) {
      const GeoPoint g = r.geo.value_or(GeoPoint{});
      out << ',' << csv::format_double(g.latitude) << ',' << csv::format_double(g.longitude);
    }
    out << '\n';
  }
}

double compute_fov(const SegmentationMap& map, const std::set<int>& class_ids) {
  map.validate();
  if (class_ids.empty()) return 0.0;
  std::size_t hits = 0;
  for (int label : map.labels) hits += class_ids.count(label);
  return static_cast<double>(hits) / static_cast<double>(map.labels.size());
}

double compute_visual_entropy(std::span<const std::uint64_t> histogram) {
  if (histogram.size() != kHistogramBins) {
    throw DataError("histogram must have 256 bins, found " + std::to_string(histogram.size()));
  }
  long double total = 0;
  for (auto c : histogram) total += static_cast<long double>(c);
  if (total == 0) throw DataError("histogram has no mass");
  long double h = 0;
  for (auto c : histogram) {
    if (c == 0) continue;
    const long double p = static_cast<long double>(c) / total;
    h -= p * std::log2(p);
  }
  // Clamp rounding residue at the extremes of [0, 8].
  double bits = static_cast<double>(h);
  if (bits < 0.0) bits = 0.0;
  if (bits > kMaxEntropyBits) bits = kMaxEntropyBits;
  return bits;
}

std::vector<std::uint64_t> load_histogram(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  std::vector<std::uint64_t> counts;
  std::string token;
  while (in >> token) {
    auto v = csv::parse_int(token);
    if (!v || *v < 0) throw DataError(path.string() + ": invalid histogram count '" + token + "'");
    counts.push_back(static_cast<std::uint64_t>(*v));
  }
  if (counts.size() != kHistogramBins) {
    throw DataError(path.string() + ": expected 256 counts, found " + std::to_string(counts.size()));
  }
  return counts;
}

FeatureVector assemble_features(const std::map<std::string, double>& fov_by_class, bool wire_present, double entropy,
                                std::int64_t car_count) {
  FeatureVector v;
  for (const auto& [name, ratio] : fov_by_class) {
    const Feature f = parse_feature(name);
    switch (f) {
      case Feature::kGreenery: v.greenery = ratio; break;
      case Feature::kSky: v.sky = ratio; break;
      case Feature::kWall: v.wall = ratio; break;
      case Feature::kFence: v.fence = ratio; break;
      case Feature::kSidewalk: v.sidewalk = ratio; break;
      default: throw DataError("'" + name + "' is not a cover-ratio feature");
    }
  }
  v.wire = wire_present ? 1 : 0;
  v.entropy = entropy;
  v.car_count = car_count;
  validate(v);
  return v;
}

ClassMapping ClassMapping::parse(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("class mapping: ") + e.what());
  }
  if (!doc.is_object()) throw DataError("class mapping must be a JSON object");
  ClassMapping m;
  for (const auto& [name, ids] : doc.items()) {
    const Feature f = parse_feature(name);
    if (f == Feature::kWire || f == Feature::kEntropy || f == Feature::kCarCount) {
      throw DataError("class mapping: '" + name + "' is not a cover-ratio feature");
    }
    if (!ids.is_array()) throw DataError("class mapping: '" + name + "' must map to an array of class ids");
    auto& set = m.classes[name];
    for (const auto& id : ids) {
      if (!id.is_number_integer() || id.get<long long>() < 0) throw DataError("class mapping: invalid id under '" + name + "'");
      set.insert(id.get<int>());
    }
  }
  return m;
}

ClassMapping ClassMapping::load(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::map<std::string, double> cover_ratios(const SegmentationMap& map, const ClassMapping& mapping) {
  std::map<std::string, double> out;
  for (const auto& [name, ids] : mapping.classes) out[name] = compute_fov(map, ids);
  return out;
}

}  // namespace streetsafe
