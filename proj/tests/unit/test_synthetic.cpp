#include <cmath>
#include <set>

#include "doctest.h"
#include "streetsafe/synthetic.hpp"

using namespace streetsafe;

TEST_SUITE("synthetic") {
  TEST_CASE("support is drawn without replacement and sorted") {
    SyntheticExpertConfig c;
    c.states = 40;
    c.demos = 500;
    auto e = make_synthetic_expert(c);
    CHECK(e.support.size() == 40);
    CHECK(std::set<StateId>(e.support.begin(), e.support.end()).size() == 40);
    CHECK(std::is_sorted(e.support.begin(), e.support.end()));
    std::set<StateId> support(e.support.begin(), e.support.end());
    for (const auto& d : e.softmax_demos.items()) CHECK(support.count(d.state) == 1);
    CHECK(e.softmax_demos.size() == 500);
  }

  TEST_CASE("reward gap is rescaled to the requested sharpness") {
    SyntheticExpertConfig c;
    c.demos = 10;
    c.sharpness = 2.5;
    auto e = make_synthetic_expert(c);
    NetworkReward r(e.truth);
    double sq = 0.0;
    for (auto s : e.support) {
      const double g = r.reward(s, Action::kSafe) - r.reward(s, Action::kUnsafe);
      sq += g * g;
    }
    CHECK(std::sqrt(sq / double(e.support.size())) == doctest::Approx(2.5).epsilon(1e-12));
  }

  TEST_CASE("greedy demonstrations share states and take the argmax") {
    SyntheticExpertConfig c;
    c.demos = 300;
    auto e = make_synthetic_expert(c);
    NetworkReward r(e.truth);
    REQUIRE(e.greedy_demos.size() == e.softmax_demos.size());
    for (std::size_t i = 0; i < e.greedy_demos.size(); ++i) {
      const auto& g = e.greedy_demos.items()[i];
      CHECK(g.state == e.softmax_demos.items()[i].state);
      const bool unsafe = r.reward(g.state, Action::kUnsafe) > r.reward(g.state, Action::kSafe);
      CHECK(g.action == (unsafe ? Action::kUnsafe : Action::kSafe));
    }
  }

  TEST_CASE("softmax sampling follows the reward's probabilities") {
    std::array<std::array<double, 8>, 2> w{};
    LinearReward r(w, {std::log(3.0), 0.0});  // p(safe) = 0.75 everywhere
    Rng rng(5);
    auto d = sample_demonstrations(r, StateSampler::uniform(), 20000, rng, SamplingMode::kSoftmax);
    double safe = 0.0;
    for (const auto& x : d.items()) safe += x.action == Action::kSafe ? 1.0 : 0.0;
    const double se = std::sqrt(0.75 * 0.25 / 20000.0);
    CHECK(std::abs(safe / 20000.0 - 0.75) < 4 * se);
  }

  TEST_CASE("same config gives the same expert") {
    SyntheticExpertConfig c;
    c.demos = 200;
    auto a = make_synthetic_expert(c), b = make_synthetic_expert(c);
    CHECK(a.truth == b.truth);
    CHECK(a.softmax_demos.items() == b.softmax_demos.items());
    c.seed = 8;
    CHECK_FALSE(make_synthetic_expert(c).truth == a.truth);
    c.states = 0;
    CHECK_THROWS(c.validate());
  }
}
