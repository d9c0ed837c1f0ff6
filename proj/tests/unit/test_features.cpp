#include <algorithm>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "streetsafe/features.hpp"
#include "test_util.hpp"

using namespace streetsafe;

namespace {

const std::string kHeader = "image_id,greenery,sky,wall,fence,sidewalk,wire,entropy,car_count\n";

SegmentationMap map_of(std::size_t w, std::size_t h, std::vector<int> labels) {
  SegmentationMap m;
  m.width = w;
  m.height = h;
  m.labels = std::move(labels);
  return m;
}

}  // namespace

TEST_SUITE("features") {
  TEST_CASE("single valid row loads with every field intact") {
    std::istringstream in(kHeader + "a1,0.25,0.5,0,0.125,1,1,4.5,3\n");
    auto t = parse_feature_table(in, "mem");
    REQUIRE(t.size() == 1);
    const auto& r = t.rows[0];
    CHECK(r.image_id == "a1");
    CHECK(r.features.greenery == 0.25);
    CHECK(r.features.sky == 0.5);
    CHECK(r.features.wall == 0.0);
    CHECK(r.features.fence == 0.125);
    CHECK(r.features.sidewalk == 1.0);
    CHECK(r.features.wire == 1);
    CHECK(r.features.entropy == 4.5);
    CHECK(r.features.car_count == 3);
    CHECK_FALSE(r.geo.has_value());
  }

  TEST_CASE("out-of-range ratio names the column and the line") {
    std::istringstream in(kHeader + "a1,0.2,0.5,0,0,0,0,1,0\na2,1.2,0.5,0,0,0,0,1,0\n");
    try {
      parse_feature_table(in, "feat.csv");
      FAIL("expected DataError");
    } catch (const DataError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("greenery") != std::string::npos);
      CHECK(msg.find("feat.csv:3") != std::string::npos);
    }
  }

  TEST_CASE("malformed rows can be skipped and reported") {
    std::istringstream in(kHeader + "a1,0.2,0.5,0,0,0,0,1,0\na2,x,0.5,0,0,0,0,1,0\na3,0.1,0.5,0,0,0,2,1,0\n");
    LoadReport report;
    auto t = parse_feature_table(in, "mem", LoadOptions{true}, &report);
    CHECK(t.size() == 1);
    CHECK(report.skipped.size() == 2);
  }

  TEST_CASE("rejects duplicates, bad headers, negative counts and entropy above 8") {
    std::istringstream dup(kHeader + "a,0,0,0,0,0,0,0,0\na,0,0,0,0,0,0,0,0\n");
    CHECK_THROWS_AS(parse_feature_table(dup, "mem"), DataError);
    std::istringstream header("id,greenery\n");
    CHECK_THROWS_AS(parse_feature_table(header, "mem"), DataError);
    std::istringstream cars(kHeader + "a,0,0,0,0,0,0,0,-1\n");
    CHECK_THROWS_AS(parse_feature_table(cars, "mem"), DataError);
    std::istringstream ent(kHeader + "a,0,0,0,0,0,0,8.5,0\n");
    CHECK_THROWS_AS(parse_feature_table(ent, "mem"), DataError);
  }

  TEST_CASE("522 valid rows give a table of 522") {
    auto t = testutil::random_table(522, 5);
    std::ostringstream out;
    write_feature_table(out, t);
    std::istringstream in(out.str());
    CHECK(parse_feature_table(in, "mem").size() == 522);
  }

  TEST_CASE("write then parse round-trips exactly, with geo columns") {
    auto t = testutil::random_table(40, 9);
    t.has_geo = true;
    Rng rng(3);
    for (auto& r : t.rows) r.geo = GeoPoint{rng.uniform(-90, 90), rng.uniform(-180, 180)};
    std::ostringstream out;
    write_feature_table(out, t, "abc123");
    CHECK(out.str().rfind("# fingerprint=abc123", 0) == 0);
    std::istringstream in(out.str());
    CHECK(parse_feature_table(in, "mem") == t);
  }

  TEST_CASE("cover ratio counts pixels") {
    CHECK(compute_fov(map_of(2, 2, {4, 4, 4, 4}), {4}) == 1.0);
    CHECK(compute_fov(map_of(2, 2, {1, 2, 3, 5}), {4}) == 0.0);
    CHECK(compute_fov(map_of(4, 3, {7, 0, 0, 7, 0, 0, 0, 0, 7, 0, 0, 0}), {7}) == 0.25);
  }

  TEST_CASE("cover ratios over a partition of the classes sum to one") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<int> labels(37 * 23);
      for (auto& l : labels) l = static_cast<int>(rng.below(19));
      auto m = map_of(37, 23, labels);
      std::vector<std::set<int>> parts(4);
      for (int c = 0; c < 19; ++c) parts[rng.below(4)].insert(c);
      double sum = 0.0;
      for (const auto& p : parts) {
        double r = compute_fov(m, p);
        CHECK(r >= 0.0);
        CHECK(r <= 1.0);
        sum += r;
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }

  TEST_CASE("segmentation maps are parsed and validated") {
    std::istringstream good("3 2\n1 2 3\n4 5 6\n");
    auto m = parse_segmentation_map(good, "mem");
    CHECK(m.width == 3);
    CHECK(m.labels == std::vector<int>{1, 2, 3, 4, 5, 6});
    std::istringstream short_map("3 2\n1 2 3\n");
    CHECK_THROWS_AS(parse_segmentation_map(short_map, "mem"), DataError);
    std::istringstream neg("1 1\n-1\n");
    CHECK_THROWS_AS(parse_segmentation_map(neg, "mem"), DataError);
  }

  TEST_CASE("visual entropy of reference histograms") {
    std::vector<std::uint64_t> h(kHistogramBins, 0);
    h[17] = 1000;
    CHECK(compute_visual_entropy(h) == 0.0);
    std::fill(h.begin(), h.end(), 3);
    CHECK(compute_visual_entropy(h) == doctest::Approx(8.0).epsilon(1e-14));
    std::fill(h.begin(), h.end(), 0);
    h[0] = 1;
    h[1] = 1;
    h[2] = 2;
    CHECK(compute_visual_entropy(h) == doctest::Approx(1.5).epsilon(1e-14));
    std::fill(h.begin(), h.end(), 0);
    CHECK_THROWS_AS(compute_visual_entropy(h), DataError);
  }

  TEST_CASE("visual entropy is bounded and permutation invariant") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::uint64_t> h(kHistogramBins);
      for (auto& c : h) c = rng.below(50);
      h[0] += 1;
      const double e = compute_visual_entropy(h);
      CHECK(e >= 0.0);
      CHECK(e <= 8.0);
      for (std::size_t i = h.size() - 1; i > 0; --i) std::swap(h[i], h[rng.below(i + 1)]);
      CHECK(compute_visual_entropy(h) == doctest::Approx(e).epsilon(1e-12));
    }
  }

  TEST_CASE("assemble_features passes ratios through") {
    CHECK(assemble_features({}, false, 0.0, 0) == FeatureVector{});
    CHECK(assemble_features({}, true, 0.0, 0).wire == 1);
    auto v = assemble_features({{"greenery", 0.3}, {"sky", 0.2}}, false, 0.0, 0);
    FeatureVector expected;
    expected.greenery = 0.3;
    expected.sky = 0.2;
    CHECK(v == expected);
    CHECK_THROWS_AS(assemble_features({{"wire", 0.3}}, false, 0.0, 0), DataError);
  }

  TEST_CASE("class mapping drives cover ratios") {
    auto mapping = ClassMapping::parse(R"({"greenery": [8, 9], "sky": [10]})");
    auto m = map_of(2, 2, {8, 9, 10, 0});
    auto r = cover_ratios(m, mapping);
    CHECK(r.at("greenery") == 0.5);
    CHECK(r.at("sky") == 0.25);
    CHECK_THROWS_AS(ClassMapping::parse(R"({"cars": [1]})"), DataError);
    CHECK_THROWS_AS(ClassMapping::parse("[1]"), DataError);
  }

  TEST_CASE("sample data histograms load") {
    auto h = load_histogram(testutil::sample_dir() / "histograms" / "img000.txt");
    CHECK(h.size() == kHistogramBins);
  }
}
