#include <doctest.h>

#include <cmath>

#include "safetune/rules.hpp"
#include "safetune/simenv.hpp"

using namespace safetune;

TEST_CASE("expressions") {
    EnvMetrics m{{"vcpus", 8}, {"total_memory_mb", 16384}};
    CHECK(Expression::parse("vcpus / 2").eval(m) == 4.0);
    CHECK(Expression::parse("-(1 + 2) * 3").eval(m) == -9.0);
    CHECK(Expression::parse("min(total_memory_mb / 4, 1000) + max(1, vcpus)").eval(m) == 1008.0);
    CHECK(Expression::parse("2 - 3 - 4").eval(m) == -5.0);
    CHECK(Expression::parse("16 / 4 / 2").eval(m) == 2.0);
    CHECK(std::isinf(Expression::parse("inf").eval(m)));
    CHECK(Expression::parse("-inf").eval(m) < 0);
    CHECK_THROWS_AS(Expression::parse("vcpus +"), InvalidInput);
    CHECK_THROWS_AS(Expression::parse("(1"), InvalidInput);
    CHECK_THROWS_AS(Expression::parse("1 $ 2"), InvalidInput);
    CHECK_THROWS_AS(Expression::parse("nope * 2").eval(m), InvalidInput);
}

TEST_CASE("rule files") {
    RuleSet r = RuleSet::from_json_text(R"({"rules":[
        {"id":"b","knob":"x","min":1,"max":"vcpus"},
        {"id":"a","knob":"y","max":"5","ignore_threshold":2,"relax_factor":2.0}]})");
    REQUIRE(r.rules.size() == 2);
    CHECK(r.rules[0].id == "a"); // sorted by id
    CHECK(r.rules[0].ignore_threshold == 2);
    CHECK(r.rules[1].relax_threshold == 3);
    RuleSet again = RuleSet::from_json_text(r.to_json_text());
    CHECK(again.rules.size() == 2);
    CHECK(again.rules[1].upper.text() == "vcpus");

    CHECK_THROWS_AS(RuleSet::from_json_text("[{\"id\":\"a\",\"knob\":\"x\"},{\"id\":\"a\",\"knob\":\"y\"}]"), InvalidInput);
    CHECK_THROWS_AS(RuleSet::from_json_text("[{\"id\":\"a\",\"knob\":\"x\",\"relax_factor\":1.0}]"), InvalidInput);
    CHECK_THROWS_AS(RuleSet::from_json_text("[{\"knob\":\"x\"}]"), InvalidInput);
    CHECK_THROWS_AS(RuleSet::from_json_text("{"), InvalidInput);
    CHECK_THROWS_AS(RuleSet::from_json_text("[{\"id\":\"a\",\"knob\":\"x\",\"maximum\":3}]"), InvalidInput);

    KnobSpace space({{"x", KnobKind::Integer, 0, 10, {}, 1.0}});
    CHECK_THROWS_AS(r.validate(space), InvalidInput);
    CHECK(r.restricted_to(space).rules.size() == 1);
}

TEST_CASE("bundled defaults cover the catalog") {
    KnobSpace space(knob_catalog());
    RuleSet r = RuleSet::from_json_text(default_rules_json());
    CHECK(r.rules.size() >= 5);
    CHECK(r.rules.size() <= 10);
    CHECK_NOTHROW(r.validate(space));
    EnvMetrics m = default_env_metrics();
    for (const auto& rule : r.rules) {
        auto [lo, hi] = rule.allowed_interval(space, m);
        CHECK(lo <= hi);
    }
}

TEST_CASE("allowed interval clipping and widening") {
    KnobSpace space({{"x", KnobKind::Continuous, 0, 100, {}, 50.0}});
    WhiteBoxRule r;
    r.knob = "x";
    r.lower = Expression::parse("20");
    r.upper = Expression::parse("inf");
    auto [lo, hi] = r.allowed_interval(space, {});
    CHECK(lo == 20);
    CHECK(hi == 100);
    r.widen = 1.5;
    auto [wlo, whi] = r.allowed_interval(space, {});
    CHECK(wlo == doctest::Approx(0.0));
    CHECK(whi == doctest::Approx(120.0));
}

TEST_CASE("relaxation protocol") {
    RuleSet rs = RuleSet::from_json_text(R"([{"id":"r1","knob":"x","max":"10"},{"id":"r2","knob":"x","max":"20"}])");
    apply_relaxation(rs, {0}, std::nullopt);
    apply_relaxation(rs, {0}, std::nullopt);
    CHECK_FALSE(rs.ignored.has_value());
    apply_relaxation(rs, {0}, std::nullopt);
    CHECK(rs.ignored == std::optional<std::size_t>(0)); // ignored for the 4th recommendation
    CHECK(rs.rules[0].conflict_counter == 3);

    // Both eligible: only the lowest id.
    RuleSet two = RuleSet::from_json_text(R"([{"id":"r1","knob":"x","max":"10"},{"id":"r2","knob":"x","max":"20"}])");
    for (int i = 0; i < 3; ++i) apply_relaxation(two, {1, 0}, std::nullopt);
    CHECK(two.ignored == std::optional<std::size_t>(0));

    // Safe feedback up to the relax threshold widens and resets.
    KnobSpace space({{"x", KnobKind::Continuous, 0, 100, {}, 0.0}});
    auto before = rs.rules[0].allowed_interval(space, {});
    apply_relaxation(rs, {}, RelaxationFeedback{0, true});
    apply_relaxation(rs, {}, RelaxationFeedback{0, false});
    CHECK(rs.rules[0].conflict_safe_counter == 1);
    apply_relaxation(rs, {}, RelaxationFeedback{0, true});
    apply_relaxation(rs, {}, RelaxationFeedback{0, true});
    CHECK(rs.rules[0].conflict_safe_counter == 0);
    CHECK(rs.rules[0].conflict_counter == 0);
    auto after = rs.rules[0].allowed_interval(space, {});
    CHECK(after.second - after.first == doctest::Approx(1.5 * (before.second - before.first)));
}
