#include <catch_amalgamated.hpp>

#include "oracles.hpp"
#include "qqlineup/visual.hpp"

using namespace qqlineup;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Evaluation pick(std::string observer, std::set<std::size_t> panels, std::string lineup = "L") {
  Evaluation e;
  e.lineup_id = std::move(lineup);
  e.observer_id = std::move(observer);
  e.selected_panels = std::move(panels);
  return e;
}

std::vector<Evaluation> singles(std::size_t hits, std::size_t total, std::size_t data, std::size_t miss) {
  std::vector<Evaluation> v;
  for (std::size_t i = 0; i < total; ++i) v.push_back(pick("o" + std::to_string(i), {i < hits ? data : miss}));
  return v;
}

}  // namespace

TEST_CASE("evaluation weights", "[visual]") {
  CHECK(evaluation_weight(pick("a", {7}), 7) == 1.0);
  CHECK(evaluation_weight(pick("a", {5, 7}), 7) == 0.5);
  CHECK(evaluation_weight(pick("a", {5, 7}), 12) == 0.0);
  CHECK_THROWS_AS(validate_evaluation(pick("a", {5, 7}), 20, false), UsageError);
  CHECK_NOTHROW(validate_evaluation(pick("a", {5, 7}), 20, true));
  CHECK_THROWS_AS(validate_evaluation(pick("a", {21}), 20, true), UsageError);
  CHECK_THROWS_AS(validate_evaluation(pick("a", {}), 20, true), UsageError);
  CHECK_THROWS_AS(validate_evaluation(pick("", {1}), 20, true), UsageError);
}

TEST_CASE("visual p-values against exact rational tails", "[visual]") {
  for (std::size_t m : {10, 20})
    for (std::size_t n = 0; n <= 30; ++n)
      for (std::size_t y = 0; y <= n; ++y) {
        INFO("m=" << m << " N=" << n << " y=" << y);
        REQUIRE_THAT(visual_p_value(static_cast<double>(y), n, m),
                     WithinAbs(oracle::binomial_upper_tail(static_cast<long>(y), n, m), 1e-12));
      }
}

TEST_CASE("visual p-value spot values", "[visual]") {
  // Frozen from the exact rational oracle.
  CHECK_THAT(visual_p_value(3, 27, 20), WithinAbs(0.150494432314383, 1e-12));
  CHECK(visual_p_value(3, 27, 20) > 0.05);
  CHECK(visual_p_value(23, 26, 20) < 1e-20);
  CHECK_THAT(visual_p_value(23, 26, 20), WithinRel(oracle::binomial_upper_tail(23, 26, 20), 1e-10));
  CHECK(visual_p_value(16, 27, 20) < 0.05);
  CHECK(visual_p_value(0, 13, 20) == 1.0);
  CHECK(visual_p_value(2.5, 27, 20) == visual_p_value(3, 27, 20));
  CHECK(visual_p_value(1.5, 38, 20) == visual_p_value(2, 38, 20));
  CHECK(visual_p_value(1.5, 38, 20) > 0.05);
  CHECK_THROWS_AS(visual_p_value(28, 27, 20), UsageError);
  CHECK_THROWS_AS(visual_p_value(1, 27, 1), UsageError);
}

TEST_CASE("visual p-value monotonicity", "[visual]") {
  for (std::size_t n : {5, 20, 40}) {
    for (double y = 0.5; y <= n; y += 0.5) REQUIRE(visual_p_value(y, n, 20) <= visual_p_value(y - 0.5, n, 20));
    // More panels lower the guessing rate 1/m, so the tail shrinks as m grows.
    for (std::size_t m = 3; m < 40; ++m) REQUIRE(visual_p_value(3, n, m) <= visual_p_value(3, n, m - 1));
  }
}

TEST_CASE("critical counts", "[visual]") {
  CHECK(critical_count(20, 20, 0.05) == 4);
  CHECK(oracle::binomial_upper_tail(3, 20, 20) > 0.05);
  CHECK(oracle::binomial_upper_tail(4, 20, 20) <= 0.05);
  CHECK_THAT(oracle::binomial_upper_tail(3, 20, 20), WithinAbs(0.0755, 1e-4));
  CHECK_THAT(oracle::binomial_upper_tail(4, 20, 20), WithinAbs(0.0159, 1e-4));
  CHECK(critical_count(1, 20, 0.05) == 1);
  CHECK(critical_count(20, 20, 1.0) == 0);
  CHECK_THROWS_AS(critical_count(20, 20, 0.0), DomainError);
  for (std::size_t n = 1; n <= 30; ++n)
    for (double a : {0.1, 0.05, 0.01}) {
      const auto k = critical_count(n, 20, a);
      REQUIRE(oracle::binomial_upper_tail(static_cast<long>(k), n, 20) <= a);
      if (k > 0) REQUIRE(oracle::binomial_upper_tail(static_cast<long>(k) - 1, n, 20) > a);
    }
}

TEST_CASE("lineup power", "[visual]") {
  CHECK_THAT(lineup_power(0.5, 20, 20, 0.05), WithinAbs(0.99871, 1e-5));
  for (std::size_t n = 1; n <= 40; ++n) {
    CHECK(lineup_power(1.0, n, 20, 0.05) == 1.0);
    CHECK(lineup_power(0.05, n, 20, 0.05) <= 0.05);
  }
  double prev = 0.0;
  for (double p = 0.0; p <= 1.0; p += 0.01) {
    const double w = lineup_power(p, 25, 20, 0.05);
    REQUIRE(w >= prev - 1e-15);
    prev = w;
  }
  prev = 0.0;
  for (std::size_t n = 1; n <= 60; ++n) {
    const double w = lineup_power(0.3, n, 20, 0.05);
    INFO("N=" << n);
    // Discreteness of y_alpha makes power saw-toothed in N; the upward trend is checked every 10.
    if (n % 10 == 0) {
      REQUIRE(w >= prev);
      prev = w;
    }
  }
}

TEST_CASE("aggregate", "[visual]") {
  const auto empty = aggregate({}, "L", 20, 4, false);
  CHECK(empty.N == 0);
  CHECK(empty.p_value == 1.0);
  CHECK_FALSE(empty.reject[0]);

  const auto all = aggregate(singles(12, 12, 4, 9), "L", 20, 4, false);
  CHECK(all.y_weighted == 12);
  CHECK_THAT(all.p_value, WithinRel(std::pow(0.05, 12), 1e-10));

  const auto r16 = aggregate(singles(16, 27, 4, 9), "L", 20, 4, false);
  CHECK(r16.N == 27);
  CHECK(r16.rejected_at(0.05));
  CHECK(r16.reject[1]);
  const auto r3 = aggregate(singles(3, 27, 4, 9), "L", 20, 4, false);
  CHECK_FALSE(r3.reject[1]);

  auto dup = singles(2, 5, 4, 9);
  dup.push_back(pick("o4", {4}));  // o4 already answered (a miss); repeat ignored
  const auto rd = aggregate(dup, "L", 20, 4, false);
  CHECK(rd.N == 5);
  CHECK(rd.y_weighted == 2);

  std::vector<Evaluation> multi{pick("a", {4, 5}), pick("b", {4}), pick("c", {1, 2, 3})};
  const auto rm = aggregate(multi, "L", 20, 4, true);
  CHECK(rm.y_weighted == 1.5);
  CHECK(rm.p_value == visual_p_value(2, 3, 20));
  CHECK(panel_pick_counts(multi, 20)[3] == 1.5);

  CHECK_THROWS_AS(aggregate({pick("a", {21})}, "L", 20, 4, false), UsageError);
  CHECK_THROWS_AS(aggregate({pick("a", {2}, "other")}, "L", 20, 4, false), UsageError);
}

TEST_CASE("evaluation JSON", "[visual][json]") {
  auto e = pick("obs-1", {3, 9});
  e.reasons = {Reason::Outliers, Reason::PointsCurve};
  e.free_text = "tails";
  e.timestamp = "2026-01-01T00:00:00Z";
  const nlohmann::json j = e;
  const auto back = evaluation_from_json(j);
  CHECK(back.selected_panels == e.selected_panels);
  CHECK(back.reasons == e.reasons);
  CHECK(back.free_text == e.free_text);
  CHECK(j.at("reasons")[0] == "outliers");
  CHECK_THROWS_AS(evaluation_from_json(nlohmann::json{{"observer_id", "a"}}), UsageError);
  CHECK_THROWS_AS(evaluation_from_json(nlohmann::json{{"observer_id", "a"}, {"selected_panels", {0}}}), UsageError);
  CHECK_THROWS_AS(evaluation_from_json(nlohmann::json{{"observer_id", "a"}, {"selected_panels", {1, 1}}}), UsageError);
  CHECK_THROWS_AS(
      evaluation_from_json(nlohmann::json{{"observer_id", "a"}, {"selected_panels", {1}}, {"reasons", {"vibes"}}}),
      UsageError);

  const nlohmann::json r = aggregate(singles(16, 27, 4, 9), "L", 20, 4, false);
  CHECK(r.at("reject_at").at("0.05") == true);
  CHECK(r.at("N") == 27);
}
