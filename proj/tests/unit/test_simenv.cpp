#include <doctest.h>

#include <cmath>

#include "safetune/simenv.hpp"
#include "safetune/trace.hpp"

using namespace safetune;

namespace {

EnvSpec single_basin() {
    EnvSpec s;
    s.space = KnobSpace({{"a", KnobKind::Continuous, 0, 1, {}, 0.1},
                         {"b", KnobKind::Continuous, 0, 1, {}, 0.1},
                         {"c", KnobKind::Continuous, 0, 1, {}, 0.1}});
    s.base = 50.0;
    Basin b;
    b.center = Point(3);
    b.center << 0.6, 0.4, 0.5;
    b.width = 0.2;
    b.amplitude = 100.0;
    b.drift = Eigen::MatrixXd::Zero(3, kContextDim);
    b.drift(0, 0) = 0.2;
    s.basins.push_back(b);
    s.failure_knobs = {"a", "b"};
    s.failure_cap = 1.5;
    s.failure_performance = -5.0;
    s.metrics = default_env_metrics();
    return s;
}

// f = base + A exp(-|x - center(c)|^2 / (2 w^2)), written out.
double basin_oracle(const Point& x, const Context& c) {
    double cx = 0.6 + 0.2 * c[0], cy = 0.4, cz = 0.5;
    double d2 = (x[0] - cx) * (x[0] - cx) + (x[1] - cy) * (x[1] - cy) + (x[2] - cz) * (x[2] - cz);
    return 50.0 + 100.0 * std::exp(-d2 / (2 * 0.2 * 0.2));
}

} // namespace

TEST_CASE("closed-form single basin") {
    SyntheticEnv env(single_basin());
    for (double c0 : {0.0, 0.5, 1.0}) {
        Context c = Context::Zero(kContextDim);
        c[0] = c0;
        auto opt = env.optimum(c);
        CHECK(opt.value == doctest::Approx(150.0).epsilon(1e-9));
        CHECK(opt.point[0] == doctest::Approx(0.6 + 0.2 * c0).epsilon(1e-4));
        Configuration at = env.space().denormalize(opt.point);
        CHECK(env.evaluate(at, c, 3).performance == doctest::Approx(basin_oracle(opt.point, c)));
        for (double x : {0.0, 0.25, 0.7}) {
            Point p = Point::Constant(3, x);
            CHECK(env.latent(p, c) == doctest::Approx(basin_oracle(p, c)).epsilon(1e-14));
        }
        CHECK(env.default_performance(c) == doctest::Approx(basin_oracle(Point::Constant(3, 0.1), c)));
        CHECK(env.check_headroom({c}) > 0.0);
    }
}

TEST_CASE("failure region") {
    SyntheticEnv env(single_basin());
    Context c = Context::Zero(kContextDim);
    EnvOutcome f = env.evaluate(Configuration{{0.9, 0.9, 0.1}}, c, 1);
    CHECK(f.failure);
    CHECK(f.performance == -5.0);
    CHECK_FALSE(env.evaluate(Configuration{{0.7, 0.7, 0.1}}, c, 1).failure);

    EnvSpec bad = single_basin();
    bad.failure_cap = 0.1;
    CHECK_THROWS_AS(SyntheticEnv{bad}, InvalidInput);
}

TEST_CASE("noise is deterministic in the iteration") {
    EnvSpec s = single_basin();
    s.noise_std = 2.0;
    s.seed = 77;
    SyntheticEnv env(s);
    Context c = Context::Zero(kContextDim);
    Configuration x{{0.5, 0.5, 0.5}};
    CHECK(env.evaluate(x, c, 10).performance == env.evaluate(x, c, 10).performance);
    CHECK(env.evaluate(x, c, 10).performance != env.evaluate(x, c, 11).performance);
    double sum = 0, sq = 0;
    const int n = 2000;
    for (int t = 0; t < n; ++t) {
        double e = env.evaluate(x, c, t).performance - env.latent(Point::Constant(3, 0.5), c);
        sum += e;
        sq += e * e;
    }
    CHECK(std::abs(sum / n) < 0.2);
    CHECK(std::sqrt(sq / n) == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("cliff") {
    EnvSpec s = single_basin();
    s.cliff = Cliff{"c", 0.8, 30.0};
    SyntheticEnv env(s);
    Context c = Context::Zero(kContextDim);
    Point lo = Point::Constant(3, 0.5), hi = lo;
    hi[2] = 0.9;
    CHECK(env.latent(hi, c) == doctest::Approx(basin_oracle(hi, c) - 30.0));
    CHECK(env.latent(lo, c) == doctest::Approx(basin_oracle(lo, c)));
}

TEST_CASE("environment files") {
    EnvSpec s = single_basin();
    s.cliff = Cliff{"c", 0.8, 30.0};
    EnvSpec again = EnvSpec::from_json_text(s.to_json_text());
    SyntheticEnv a(s), b(again);
    Context c = Context::Constant(kContextDim, 0.3);
    for (double x : {0.1, 0.5, 0.95}) CHECK(a.latent(Point::Constant(3, x), c) == b.latent(Point::Constant(3, x), c));
    CHECK(again.failure_knobs == s.failure_knobs);
    CHECK(again.to_json_text() == s.to_json_text());

    CHECK_THROWS_AS(EnvSpec::from_json_text("{"), InvalidInput);
    CHECK_THROWS_AS(EnvSpec::from_json_text(R"({"knobs":[],"surprise":1})"), InvalidInput);
    CHECK_THROWS_AS(EnvSpec::from_json_text(
                        R"({"knobs":[{"name":"a","kind":"continuous","lower":0,"upper":1,"default":0}],"basins":[{"center":[0.5,0.5],"width":1,"amplitude":1}]})"),
                    InvalidInput);
}

TEST_CASE("generated environments") {
    for (int knobs : {1, 3, 5, 10}) {
        EnvSpec s = generate_env({knobs, 9});
        CHECK(s.space.size() == static_cast<std::size_t>(knobs));
        CHECK(generate_env({knobs, 9}).to_json_text() == s.to_json_text());
        CHECK(generate_env({knobs, 10}).to_json_text() != s.to_json_text());
        SyntheticEnv env(s);
        TraceOptions o;
        o.iterations = 50;
        o.seed = 2;
        auto contexts = WorkloadTrace::generate(o).contexts();
        CHECK(env.check_headroom(contexts) > 0.0);
        CHECK(s.noise_std > 0.0);
    }
    CHECK_THROWS_AS(generate_env({0, 1}), InvalidInput);
    CHECK_THROWS_AS(generate_env({41, 1}), InvalidInput);
}
