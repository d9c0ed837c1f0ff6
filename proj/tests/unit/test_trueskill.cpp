#include <cmath>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "streetsafe/trueskill.hpp"
#include "test_util.hpp"

using namespace streetsafe;

namespace {

ComparisonRecord rec(std::int64_t ts, std::string w, std::string l) {
  ComparisonRecord r;
  r.timestamp = ts;
  r.session = "s";
  r.winner_id = std::move(w);
  r.loser_id = std::move(l);
  return r;
}

}  // namespace

TEST_SUITE("trueskill") {
  TEST_CASE("default prior") {
    auto r = init_rating();
    CHECK(r.mu == 25.0);
    CHECK(r.sigma == doctest::Approx(8.333333333333));
    CHECK(r.games == 0);
    TrueSkillParams p;
    p.mu0 = 0.0;
    CHECK(init_rating(p).mu == 0.0);
    p.sigma0 = 0.0;
    CHECK_THROWS_AS(p.validate(), DataError);
  }

  TEST_CASE("first update between equal priors without dynamics") {
    TrueSkillParams p;
    p.tau = 0.0;
    auto [w, l] = update(init_rating(p), init_rating(p), p);
    CHECK(w.mu == doctest::Approx(29.205).epsilon(1e-4));
    CHECK(l.mu == doctest::Approx(20.795).epsilon(1e-4));
    CHECK(w.games == 1);
    CHECK(l.games == 1);
  }

  TEST_CASE("updates agree with a 50-digit evaluation across the domain") {
    Rng rng(99);
    for (int i = 0; i < 500; ++i) {
      TrueSkillParams p;
      p.beta = rng.uniform(0.5, 8.0);
      p.tau = rng.bernoulli(0.3) ? 0.0 : rng.uniform(0.0, 1.0);
      PlayerRating a{rng.uniform(-40, 60), rng.uniform(0.3, 10.0), 0};
      PlayerRating b{rng.uniform(-40, 60), rng.uniform(0.3, 10.0), 0};
      auto [w, l] = update(a, b, p);
      auto [ow, ol] = oracle::trueskill_update({a.mu, a.sigma}, {b.mu, b.sigma}, p.beta, p.tau);
      const double scale = 1e-9 * std::max(1.0, std::abs(a.mu - b.mu));
      CHECK(std::abs(w.mu - ow.mu.convert_to<double>()) < scale);
      CHECK(std::abs(l.mu - ol.mu.convert_to<double>()) < scale);
      CHECK(std::abs(w.sigma - ow.sigma.convert_to<double>()) < 1e-9);
      CHECK(std::abs(l.sigma - ol.sigma.convert_to<double>()) < 1e-9);
    }
  }

  TEST_CASE("winner rises, loser falls, variances shrink without dynamics") {
    Rng rng(7);
    TrueSkillParams p;
    p.tau = 0.0;
    for (int i = 0; i < 500; ++i) {
      PlayerRating a{rng.uniform(-30, 80), rng.uniform(0.1, 12.0), 0};
      PlayerRating b{rng.uniform(-30, 80), rng.uniform(0.1, 12.0), 0};
      auto [w, l] = update(a, b, p);
      CHECK(w.mu >= a.mu);
      CHECK(l.mu <= b.mu);
      CHECK(w.sigma <= a.sigma);
      CHECK(l.sigma <= b.sigma);
      // For heavily expected wins the change drops below double resolution;
      // within four performance deviations it must be visible.
      const double c = std::sqrt(2 * p.beta * p.beta + a.sigma * a.sigma + b.sigma * b.sigma);
      if ((a.mu - b.mu) / c < 4.0) {
        CHECK(w.mu > a.mu);
        CHECK(l.mu < b.mu);
        CHECK(w.sigma < a.sigma);
        CHECK(l.sigma < b.sigma);
      }
      CHECK(w.sigma > 0.0);
      CHECK(l.sigma > 0.0);
    }
  }

  TEST_CASE("swapping the outcome mirrors the update") {
    PlayerRating a{25.0, 8.0, 3};
    PlayerRating b{25.0, 8.0, 3};
    auto [w1, l1] = update(a, b);
    auto [w2, l2] = update(b, a);
    CHECK(w1 == w2);
    CHECK(l1 == l2);
    CHECK(w1.mu - a.mu == doctest::Approx(b.mu - l1.mu));
  }

  TEST_CASE("expected wins move ratings less than upsets") {
    PlayerRating strong{35.0, 4.0, 0};
    PlayerRating weak{15.0, 4.0, 0};
    auto expected = update(strong, weak);
    auto upset = update(weak, strong);
    CHECK(std::abs(expected.first.mu - strong.mu) < std::abs(upset.first.mu - weak.mu));
  }

  TEST_CASE("mean factor stays finite deep in the tail") {
    for (double t : {-40.0, -20.0, -8.0, -6.0001, -5.9999, 0.0, 10.0, 40.0}) {
      const double v = win_mean_factor(t);
      const double w = win_variance_factor(t);
      CHECK(std::isfinite(v));
      CHECK(w < 1.0);
      // phi(t) underflows for large positive t, where both factors are 0.
      if (t < 30.0) {
        CHECK(v > 0.0);
        CHECK(w > 0.0);
      } else {
        CHECK(v >= 0.0);
        CHECK(w >= 0.0);
      }
    }
    const oracle::Real t = -7;
    const oracle::Real v =
        exp(-t * t / 2) / sqrt(2 * boost::math::constants::pi<oracle::Real>()) / (boost::math::erfc(-t / sqrt(oracle::Real(2))) / 2);
    CHECK(win_mean_factor(-7.0) == doctest::Approx(v.convert_to<double>()).epsilon(1e-12));
    CHECK(win_mean_factor(-6.0 - 1e-9) == doctest::Approx(win_mean_factor(-6.0 + 1e-9)).epsilon(1e-8));
  }

  TEST_CASE("match quality peaks for evenly matched, certain players") {
    // Equal default priors: sqrt(2 beta^2 / (2 beta^2 + 2 sigma^2)) with sigma = 2 beta.
    CHECK(match_quality(init_rating(), init_rating()) == doctest::Approx(std::sqrt(0.2)).epsilon(1e-14));
    Rng rng(31);
    for (int i = 0; i < 200; ++i) {
      PlayerRating a{rng.uniform(0, 50), rng.uniform(0.5, 9), 0};
      PlayerRating b{rng.uniform(0, 50), rng.uniform(0.5, 9), 0};
      const double q = match_quality(a, b);
      CHECK(q > 0.0);
      CHECK(q <= 1.0);
      CHECK(q == doctest::Approx(match_quality(b, a)).epsilon(1e-14));
      PlayerRating nearer = b;
      nearer.mu = 0.5 * (a.mu + b.mu);
      CHECK(match_quality(a, nearer) >= q);
      // With equal means, less uncertainty only makes the draw likelier.
      PlayerRating twin = a;
      twin.sigma = b.sigma;
      PlayerRating surer = twin;
      surer.sigma = 0.5 * twin.sigma;
      CHECK(match_quality(a, surer) > match_quality(a, twin));
    }
  }

  TEST_CASE("replay folds records in order") {
    CHECK(replay_log({}).empty());
    std::vector<ComparisonRecord> one = {rec(1, "a", "b")};
    auto t = replay_log(one);
    CHECK(t.size() == 2);
    CHECK(t.find("a")->games == 1);
    CHECK(t.find("b")->games == 1);
    CHECK(t.find("a")->mu > t.find("b")->mu);

    std::vector<ComparisonRecord> many;
    const std::vector<std::string> ids = {"champ", "x", "y", "z"};
    for (int i = 0; i < 50; ++i) many.push_back(rec(i, "champ", ids[1 + i % 3]));
    for (int i = 0; i < 30; ++i) many.push_back(rec(100 + i, ids[1 + i % 3], ids[1 + (i + 1) % 3]));
    auto rt = replay_log(many);
    for (const auto& [id, r] : rt.ratings()) {
      if (id != "champ") CHECK(rt.find("champ")->mu > r.mu);
    }
    many.push_back(rec(500, "q", "q"));
    CHECK_THROWS_AS(replay_log(many), DataError);
  }

  TEST_CASE("comparison log lines round-trip") {
    ComparisonRecord r = rec(1700000000, "img1", "img2");
    r.meta.age = "30-39";
    r.meta.location = "with\ttab";
    std::ostringstream out;
    out << format_comparison_line(r) << format_comparison_line(rec(1700000001, "img2", "img3"));
    std::istringstream in(out.str());
    auto parsed = parse_comparison_log(in, "mem");
    REQUIRE(parsed.size() == 2);
    CHECK(parsed[0].meta.age == "30-39");
    CHECK(parsed[0].meta.gender.empty());
    CHECK(parsed[0].meta.location == "with tab");
    CHECK(parsed[1].winner_id == "img2");

    std::istringstream backwards(format_comparison_line(rec(5, "a", "b")) + format_comparison_line(rec(4, "a", "b")));
    CHECK_THROWS_AS(parse_comparison_log(backwards, "mem"), DataError);
    std::istringstream shortline("5\ts\ta\n");
    CHECK_THROWS_AS(parse_comparison_log(shortline, "mem"), DataError);
  }

  TEST_CASE("sample comparison log replays") {
    auto records = load_comparison_log(testutil::sample_dir() / "comparisons.tsv");
    CHECK(records.size() == 240);
    CHECK(replay_log(records).size() == 24);
  }

  TEST_CASE("normalization maps scores onto the unit interval") {
    RatingTable t;
    t.set("a", {10, 1, 1});
    t.set("b", {20, 1, 1});
    t.set("c", {30, 1, 1});
    auto s = normalize_scores(t);
    CHECK(s.at("a") == 0.0);
    CHECK(s.at("b") == 0.5);
    CHECK(s.at("c") == 1.0);
    CHECK(has_score_spread(t));
    t.set("d", {30, 2, 1});
    auto cons = normalize_scores(t, ScoreMode::kConservative);
    CHECK(cons.at("d") < cons.at("c"));

    RatingTable flat;
    flat.set("a", {5, 1, 0});
    flat.set("b", {5, 1, 0});
    CHECK_FALSE(has_score_spread(flat));
    CHECK_THROWS_AS(normalize_scores(flat), DataError);
  }

  TEST_CASE("labels threshold at the mean score") {
    auto l = derive_labels({{"a", 0.0}, {"b", 1.0}});
    CHECK(l.threshold == 0.5);
    CHECK(l.entries.at("a").label == Action::kUnsafe);
    CHECK(l.entries.at("b").label == Action::kSafe);

    auto tie = derive_labels({{"a", 0.5}, {"b", 0.5}});
    CHECK(tie.entries.at("a").label == Action::kUnsafe);

    auto o = derive_labels({{"a", 0.0}, {"b", 1.0}}, {{"a", Action::kSafe}});
    CHECK(o.entries.at("a").label == Action::kSafe);
    CHECK(o.entries.at("a").overridden);
    CHECK_FALSE(o.entries.at("b").overridden);
  }

  TEST_CASE("ratings and labels exports reload") {
    testutil::TempDir dir;
    auto t = replay_log(load_comparison_log(testutil::sample_dir() / "comparisons.tsv"));
    {
      auto out = std::ofstream(dir / "ratings.csv");
      write_ratings(out, t, "fp");
    }
    CHECK(load_ratings(dir / "ratings.csv") == t);
    auto labels = derive_labels(normalize_scores(t));
    {
      auto out = std::ofstream(dir / "labels.csv");
      write_labels(out, labels);
    }
    auto back = load_labels(dir / "labels.csv");
    CHECK(back.entries == labels.entries);
  }
}
