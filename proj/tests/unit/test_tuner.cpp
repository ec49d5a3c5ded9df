#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "dense_gp_oracle.hpp"
#include "safetune/tuner.hpp"

using namespace safetune;

namespace {

KnobSpace space2() {
    return KnobSpace({{"a", KnobKind::Continuous, 0, 1, {}, 0.3}, {"b", KnobKind::Continuous, 0, 1, {}, 0.5}});
}

double truth(const Point& x) { return 100.0 + 80.0 * x[0] - 30.0 * (x[1] - 0.5) * (x[1] - 0.5); }

Context ctx(double v) { return Context::Constant(kContextDim, v); }

// A small history scattered around the default, in one context blob.
std::vector<Observation> history(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.15, 0.15);
    std::normal_distribution<double> g(0.0, 0.01);
    KnobSpace s = space2();
    std::vector<Observation> repo;
    for (int t = 0; t < n; ++t) {
        Observation o;
        o.iteration = t;
        o.context = ctx(0.3);
        for (int i = 0; i < kContextDim; ++i) o.context[i] += g(rng);
        o.point = Point(2);
        o.point << 0.3 + (t == 0 ? 0.0 : u(rng)), 0.5 + (t == 0 ? 0.0 : u(rng));
        o.config = s.denormalize(o.point);
        o.point = s.normalize(o.config);
        o.performance = truth(o.point);
        o.tau = 100.0;
        o.safe = o.performance >= o.tau;
        repo.push_back(o);
    }
    return repo;
}

// Reproduces the first step's candidate set: one selection draw, then the hypercube discretization.
CandidateSet replay_candidates(const Tuner& tuner, int cluster, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const Subspace& sub = tuner.registry().cluster(cluster).subspace;
    CandidateSet c = discretize(sub, tuner.config().hypercube_density, tuner.space(), rng);
    std::vector<Point> ev;
    for (const auto& o : tuner.repository()) ev.push_back(o.point);
    mark_evaluated(c, ev);
    return c;
}

} // namespace

TEST_CASE("bootstrap") {
    TunerConfig cfg;
    Tuner t(space2(), cfg);
    CHECK_THROWS_AS(t.step(ctx(0.3), 100.0), std::logic_error);
    t.bootstrap(space2().default_config(), 100.0, ctx(0.3), 100.0);
    CHECK(t.repository().size() == 1);
    Recommendation r = t.step(ctx(0.3), 100.0);
    CHECK(t.theta_best(0) == space2().normalize(space2().default_config()));
    const Subspace& sub = t.registry().cluster(0).subspace;
    CHECK(sub.kind == RegionKind::Hypercube);
    CHECK(sub.radius == cfg.subspace.r0);
    CHECK(sub.center == t.theta_best(0));
    CHECK((r.point - sub.center).norm() <= cfg.subspace.r0 + 1e-9);
    CHECK_THROWS_AS(t.step(ctx(0.3), 100.0), std::logic_error);
    t.update(ctx(0.3), 100.0, 101.0, false);
    CHECK(t.repository().size() == 2);
    CHECK_THROWS_AS(t.update(ctx(0.3), 100.0, 101.0, false), std::logic_error);

    // A poor default still gives a valid state.
    Tuner poor(space2(), cfg);
    Configuration bad = space2().default_config();
    bad.values = {0.0, 0.0};
    poor.bootstrap(bad, 1.0, ctx(0.3), 1.0);
    CHECK_NOTHROW(poor.step(ctx(0.3), 1.0));
}

TEST_CASE("greedy mean with epsilon 0 and beta 0") {
    TunerConfig cfg;
    cfg.epsilon = 0.0;
    cfg.beta = 0.0;
    cfg.seed = 17;
    cfg.subspace.r0 = 0.1;
    Tuner t(space2(), cfg);
    t.resume(history(30, 1));
    Recommendation r = t.step(ctx(0.3), 100.0);
    CHECK(r.kind == SelectionKind::Ucb);

    CandidateSet c = replay_candidates(t, r.cluster, cfg.seed);
    const GpModel& g = *t.registry().cluster(r.cluster).model;
    double best = -std::numeric_limits<double>::infinity();
    Point expect;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (c.evaluated[i]) continue;
        double m, s;
        oracle::posterior(g, c.points[i], ctx(0.3) + Context::Zero(kContextDim), m, s);
        if (m > 100.0 && m > best) {
            best = m;
            expect = c.points[i];
        }
    }
    REQUIRE(expect.size() == 2);
    CHECK((r.point - expect).norm() < 1e-12);
    CHECK(r.mean == doctest::Approx(best).epsilon(1e-8));
}

TEST_CASE("boundary exploration with epsilon 1") {
    TunerConfig cfg;
    cfg.epsilon = 1.0;
    cfg.seed = 23;
    cfg.subspace.r0 = 0.1;
    Tuner t(space2(), cfg);
    t.resume(history(30, 2));
    const double tau = 95.0;
    Recommendation r = t.step(ctx(0.3), tau);
    CHECK(r.kind == SelectionKind::Boundary);

    CandidateSet c = replay_candidates(t, r.cluster, cfg.seed);
    const GpModel& g = *t.registry().cluster(r.cluster).model;
    const Point best = t.theta_best(r.cluster);
    std::size_t fb = c.size();
    for (std::size_t i = 0; i < c.size(); ++i)
        if ((c.points[i] - best).cwiseAbs().maxCoeff() <= 1e-9) fb = i;
    if (fb == c.size()) {
        c.points.push_back(best);
        c.evaluated.push_back(true);
    }
    std::vector<bool> safe(c.size());
    std::vector<double> sd(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        double m, s;
        oracle::posterior(g, c.points[i], ctx(0.3), m, s);
        sd[i] = s;
        safe[i] = m - 2.0 * s > tau || (c.points[i] - best).norm() < 1e-9;
    }
    std::vector<bool> boundary = flag_boundary(c.points, safe, t.registry().cluster(r.cluster).subspace, 4);
    double top = -1;
    Point expect;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (boundary[i] && !c.evaluated[i] && sd[i] > top) {
            top = sd[i];
            expect = c.points[i];
        }
    }
    REQUIRE(expect.size() == 2);
    CHECK((r.point - expect).norm() < 1e-12);
    CHECK(r.std == doctest::Approx(top).epsilon(1e-8));
}

TEST_CASE("fallback when nothing else is safe") {
    TunerConfig cfg;
    cfg.epsilon = 0.0;
    Tuner t(space2(), cfg);
    t.resume(history(20, 3));
    Recommendation r = t.step(ctx(0.3), 1e9);
    CHECK(r.kind == SelectionKind::Exploit);
    CHECK(r.point == t.theta_best(r.cluster));
    CHECK(r.safe_count == 1);
}

TEST_CASE("updates, failures and success counting") {
    TunerConfig cfg;
    cfg.epsilon = 0.0;
    Tuner t(space2(), cfg);
    t.bootstrap(space2().default_config(), 100.0, ctx(0.3), 100.0);
    // A threshold well below the bootstrap value leaves safe candidates, so no switch resets the counters.
    t.step(ctx(0.3), 50.0);
    t.update(ctx(0.3), 50.0, 120.0, false);
    CHECK(t.registry().cluster(0).adapt.succ_counter == 1);
    t.step(ctx(0.3), 50.0);
    CHECK(t.registry().cluster(0).subspace.kind == RegionKind::Hypercube);
    t.update(ctx(0.3), 50.0, 130.0, false);
    CHECK(t.registry().cluster(0).adapt.succ_counter == 2);
    t.step(ctx(0.3), 50.0);
    t.update(ctx(0.3), 50.0, 555.0, true, -1.0);
    const Observation& last = t.repository().back();
    CHECK(last.failure);
    CHECK_FALSE(last.safe);
    CHECK(last.performance == -1.0);
    CHECK(last.iteration == 3);
    MetricsReport m = t.metrics();
    CHECK(m.unsafe == 1);
    CHECK(m.failures == 1);
    CHECK(t.registry().cluster(0).adapt.fail_counter == 1);
    // Iterations strictly increase.
    for (std::size_t i = 1; i < t.repository().size(); ++i)
        CHECK(t.repository()[i].iteration == t.repository()[i - 1].iteration + 1);
}

TEST_CASE("re-cluster check runs on the 25th new observation") {
    TunerConfig cfg;
    cfg.epsilon = 0.0;
    Tuner t(space2(), cfg);
    t.resume(history(100, 4));
    const int before = t.registry().relearn_count();
    for (int k = 1; k <= 25; ++k) {
        t.step(ctx(0.8), 100.0);
        t.update(ctx(0.8), 100.0, 110.0, false);
        const IterationRecord& r = t.metrics().series.back();
        CHECK(r.relearned == (k == 25));
    }
    CHECK(t.registry().relearn_count() == before + 1);
    CHECK(t.registry().cluster_count() == 2);
}

TEST_CASE("metrics match hand sums") {
    TunerConfig cfg;
    Tuner t(space2(), cfg);
    t.bootstrap(space2().default_config(), 100.0, ctx(0.3), 100.0);
    const double perf[3] = {105.0, 90.0, 130.0};
    const double tau[3] = {100.0, 95.0, 110.0};
    for (int i = 0; i < 3; ++i) {
        t.step(ctx(0.3), tau[i]);
        t.update(ctx(0.3), tau[i], perf[i], false);
    }
    MetricsReport m = t.metrics();
    CHECK(m.iterations == 3);
    CHECK(m.cumulative_performance == 325.0);
    CHECK(m.cumulative_improvement == 20.0); // 5 - 5 + 20
    CHECK(m.unsafe == 1);
    CHECK(m.unsafe_rate == doctest::Approx(1.0 / 3));

    std::vector<IterationRecord> flat(4);
    for (auto& r : flat) {
        r.performance = r.tau = 50.0;
        r.safe = true;
    }
    CHECK(summarize(flat).cumulative_improvement == 0.0);
}

TEST_CASE("recommendations respect black-box safety") {
    TunerConfig cfg;
    cfg.seed = 5;
    Tuner t(space2(), cfg);
    t.bootstrap(space2().default_config(), truth(space2().normalize(space2().default_config())), ctx(0.3), 100.0);
    for (int k = 0; k < 40; ++k) {
        Recommendation r = t.step(ctx(0.3), 100.0);
        if (r.kind != SelectionKind::Exploit) CHECK(r.lower_bound > 100.0);
        t.update(ctx(0.3), 100.0, truth(r.point), false);
    }
    CHECK(t.metrics().unsafe == 0);
}

TEST_CASE("vanilla mode searches globally") {
    TunerConfig cfg;
    cfg.use_safe = false;
    Tuner t(space2(), cfg);
    t.resume(history(10, 6));
    Recommendation r = t.step(ctx(0.3), 100.0);
    CHECK(r.region == "global");
}

TEST_CASE("config validation") {
    TunerConfig c;
    c.epsilon = 1.5;
    CHECK_THROWS_AS(c.validate(), InvalidInput);
    c = TunerConfig{};
    c.beta = -1;
    CHECK_THROWS_AS(c.validate(), InvalidInput);
    c = TunerConfig{};
    c.mi_threshold = 2;
    CHECK_THROWS_AS(c.validate(), InvalidInput);
    c = TunerConfig{};
    c.subspace.r0 = 0.9;
    CHECK_THROWS_AS(c.validate(), InvalidInput);
}
