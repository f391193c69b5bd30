#include "tsearch/config.hpp"
#include "tsearch/domain.hpp"
#include "tsearch/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace tsearch;

namespace {

// Independent oracle: m-th root of the product of the probabilities.
double geometric_mean_oracle(const std::vector<double>& probs) {
  long double product = 1.0L;
  for (double p : probs) product *= static_cast<long double>(p);
  return static_cast<double>(std::pow(product, 1.0L / static_cast<long double>(probs.size())));
}

std::vector<double> logs(const std::vector<double>& probs) {
  std::vector<double> out;
  for (double p : probs) out.push_back(std::log(p));
  return out;
}

}  // namespace

TEST_CASE("compute_confidence examples") {
  CHECK(compute_confidence(logs({1.0})) == doctest::Approx(1.0));
  CHECK(compute_confidence(logs({0.5, 0.5})) == doctest::Approx(0.5));
  const double expected = geometric_mean_oracle({0.9, 0.8, 0.7});
  CHECK(std::abs(expected - 0.7958) < 1e-4);
  CHECK(compute_confidence(logs({0.9, 0.8, 0.7})) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("compute_confidence errors") {
  std::vector<double> empty;
  CHECK_THROWS_WITH_AS(compute_confidence(empty), "no generated tokens", DomainError);
  std::vector<double> bad{-0.1, 0.2};
  CHECK_THROWS_WITH_AS(compute_confidence(bad), "invalid log-probability", DomainError);
}

TEST_CASE("compute_confidence is permutation invariant and absorbs its own mean") {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> lp;
    const int m = 1 + static_cast<int>(rng.below(12));
    for (int i = 0; i < m; ++i) lp.push_back(std::log(0.01 + 0.99 * rng.uniform()));
    const double c = compute_confidence(lp);
    CHECK(c > 0.0);
    CHECK(c <= 1.0);
    std::vector<double> rev(lp.rbegin(), lp.rend());
    CHECK(compute_confidence(rev) == doctest::Approx(c).epsilon(1e-12));
    lp.push_back(std::log(c));
    CHECK(compute_confidence(lp) == doctest::Approx(c).epsilon(1e-12));
  }
}

TEST_CASE("node_value") {
  CHECK(node_value(0.6, 0.7, 1, 1) == doctest::Approx(1.3));
  CHECK(node_value(0.9, std::nullopt, 1, 1) == doctest::Approx(0.9));
  CHECK(node_value(0.5, 0.5, 0.5, 0.5) == doctest::Approx(0.5));
  CHECK_THROWS_AS(node_value(0.5, 0.5, -1, 1), ConfigError);
}

TEST_CASE("node_value with w_eval = 0 orders like confidence") {
  SplitMix64 rng(3);
  for (int i = 0; i < 500; ++i) {
    const double a = rng.uniform(), b = rng.uniform(), ea = rng.uniform(), eb = rng.uniform();
    CHECK((node_value(a, ea, 1, 0) < node_value(b, eb, 1, 0)) == (a < b));
    CHECK(node_value(a, ea, 1, 1) <= node_value(std::min(1.0, a + 0.1), ea, 1, 1));
  }
}

TEST_CASE("interval_iou") {
  CHECK(interval_iou({0, 10}, {0, 10}) == doctest::Approx(1.0));
  CHECK(interval_iou({0, 10}, {10, 20}) == doctest::Approx(0.0));
  CHECK(interval_iou({0, 10}, {5, 15}) == doctest::Approx(5.0 / 15.0));
  CHECK(interval_iou({5, 15}, {0, 10}) == doctest::Approx(interval_iou({0, 10}, {5, 15})));
  CHECK(Interval{3, 7}.to_string() == "[3,7)");
}

TEST_CASE("rational fps") {
  CHECK(Rational::parse("30").to_double() == doctest::Approx(30.0));
  CHECK(Rational::parse("30000/1001").to_double() == doctest::Approx(29.97002997));
  CHECK(Rational::parse("29.97").to_double() == doctest::Approx(29.97));
  CHECK_THROWS_AS(Rational::parse("0"), ConfigError);
  CHECK_THROWS_AS(Rational::parse("abc"), ConfigError);
  VideoSource v{"v", 100, Rational::parse("2")};
  CHECK(v.timestamp(42) == doctest::Approx(21.0));
  CHECK(v.duration_seconds() == doctest::Approx(50.0));
}

TEST_CASE("query validation") {
  Query q{"q", {{'A', "x"}, {'B', "y"}}, 'B'};
  CHECK_NOTHROW(q.validate());
  CHECK(q.has_option('A'));
  CHECK_FALSE(q.has_option('C'));
  Query gap{"q", {{'A', "x"}, {'C', "y"}}, std::nullopt};
  CHECK_THROWS_AS(gap.validate(), DomainError);
  Query one{"q", {{'A', "x"}}, std::nullopt};
  CHECK_THROWS_AS(one.validate(), DomainError);
  Query free_form{"q", {}, std::nullopt};
  CHECK_NOTHROW(free_form.validate());
}

TEST_CASE("keyframe memory stays sorted and evicts lowest value") {
  KeyframeMemory m(3);
  CHECK(m.add({12.0, {24, 25}, "late", 1.0}));
  CHECK(m.add({5.0, {10, 11}, "early", 1.5}));
  CHECK(m.render() == "[t=5.0s] early\n[t=12.0s] late\n");
  CHECK(m.add({8.0, {16, 17}, "middle", 1.2}));
  CHECK(m.add({1.0, {2, 3}, "first", 1.9}));  // evicts "late" (value 1.0)
  REQUIRE(m.size() == 3);
  CHECK(m.notes()[0].text == "first");
  CHECK(m.notes()[2].text == "middle");
  CHECK_FALSE(m.add({20.0, {40, 41}, "weak", 0.1}));
  CHECK(m.size() == 3);
  CHECK_THROWS_AS(m.add({3.0, {6, 7}, "", 1.0}), DomainError);
}

TEST_CASE("keyframe memory eviction ties drop the newest note") {
  KeyframeMemory m(2);
  m.add({1.0, {2, 3}, "a", 1.0});
  m.add({2.0, {4, 5}, "b", 1.0});
  CHECK_FALSE(m.add({0.5, {1, 2}, "c", 1.0}));
  CHECK(m.render() == "[t=1.0s] a\n[t=2.0s] b\n");
}

TEST_CASE("search config defaults and loading") {
  SearchConfig c;
  CHECK(c.k == 5);
  CHECK(c.n == 6);
  CHECK(c.n_f == 8);
  CHECK(c.c1 == doctest::Approx(0.9));
  CHECK(c.c2 == doctest::Approx(0.7));
  CHECK(c.w_conf == 1.0);
  CHECK(c.w_eval == 1.0);
  CHECK(c.effective_min_interval() == 8);
  CHECK(c.utv_intervals == 8);

  const auto loaded = config_from_json({{"k", 3}, {"final_selection", "frontier_only"}, {"seed", 9}});
  CHECK(loaded.k == 3);
  CHECK(loaded.final_selection == FinalSelection::frontier_only);
  CHECK(loaded.seed == 9);
  CHECK(config_from_json(config_to_json(loaded)).k == 3);

  CHECK_THROWS_AS(config_from_json({{"c1", 0.5}, {"c2", 0.7}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"k", "five"}}), ConfigError);
}
