#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "dense_gp_oracle.hpp"
#include "safetune/safety.hpp"

using namespace safetune;

namespace {

KnobSpace unit_space(int m) {
    std::vector<KnobDef> k;
    for (int i = 0; i < m; ++i) k.push_back({"k" + std::to_string(i), KnobKind::Continuous, 0, 1, {}, 0.5});
    return KnobSpace(k);
}

GpModel toy_model_1d() {
    TrainingSet t;
    t.points.resize(5, 1);
    t.points << 0.1, 0.3, 0.5, 0.7, 0.9;
    t.contexts = Eigen::MatrixXd::Constant(5, 2, 0.3);
    t.targets.resize(5);
    t.targets << 100, 140, 180, 130, 90;
    KernelParams p = KernelParams::defaults(1);
    p.lengthscales[0] = 0.2;
    p.noise_variance = 1e-4;
    return GpModel::with_params(t, p);
}

} // namespace

TEST_CASE("line discretization") {
    KnobSpace s = unit_space(3);
    Eigen::VectorXd d(3);
    d << 1, 1, 0;
    Subspace line = Subspace::line(Point::Constant(3, 0.4), d, 0.05);
    std::mt19937_64 rng(1);
    CandidateSet c = discretize(line, 5, s, rng);
    CHECK(c.size() >= 5);
    bool has_center = false;
    for (const Point& p : c.points) {
        has_center = has_center || (p - line.center).norm() < 1e-12;
        Eigen::VectorXd off = p - line.center;
        CHECK((off - off.dot(line.direction) * line.direction).norm() < 1e-9);
        CHECK((p.array() >= 0).all());
        CHECK((p.array() <= 1).all());
    }
    CHECK(has_center);
    CHECK_THROWS_AS(discretize(line, 1, s, rng), InvalidInput);
}

TEST_CASE("hypercube discretization stays in the ball") {
    KnobSpace s = unit_space(4);
    Subspace h = Subspace::hypercube(Point::Constant(4, 0.5), 0.05);
    std::mt19937_64 rng(2);
    CandidateSet c = discretize(h, 20, s, rng);
    CHECK(c.size() == 81); // 20*m plus the center
    for (const Point& p : c.points) CHECK((p - h.center).norm() <= 0.05 + 1e-9);

    // Near a corner the ball is clipped to the unit cube.
    Subspace corner = Subspace::hypercube(Point::Zero(4), 0.3);
    for (const Point& p : discretize(corner, 20, s, rng).points) {
        CHECK((p.array() >= 0).all());
        CHECK(p.norm() <= 0.3 + 1e-9);
    }
}

TEST_CASE("one-dimensional containment") {
    KnobSpace s = unit_space(1);
    Subspace h = Subspace::hypercube(Point::Constant(1, 0.5), 0.1);
    std::mt19937_64 rng(3);
    CandidateSet c = discretize(h, 10, s, rng);
    CHECK(c.size() == 11);
    for (const Point& p : c.points) {
        CHECK(p[0] >= 0.4 - 1e-12);
        CHECK(p[0] <= 0.6 + 1e-12);
    }

    // Integer knob 0..20: every candidate is a grid value within the ball, no duplicates.
    KnobSpace ints({{"n", KnobKind::Integer, 0, 20, {}, 10.0}});
    std::set<double> allowed;
    for (int v = 0; v <= 20; ++v)
        if (std::abs(v / 20.0 - 0.5) <= 0.1 + 1e-12) allowed.insert(v / 20.0);
    CandidateSet ci = discretize(h, 10, ints, rng);
    std::set<double> seen;
    for (const Point& p : ci.points) {
        CHECK(allowed.count(p[0]) == 1);
        CHECK(seen.insert(p[0]).second);
    }
    CHECK(seen == allowed);
}

TEST_CASE("black filter matches the dense posterior") {
    GpModel g = toy_model_1d();
    Context ctx = Context::Constant(2, 0.3);
    std::vector<Point> pts;
    Eigen::MatrixXd rows(101, 1);
    for (int i = 0; i <= 100; ++i) {
        pts.push_back(Point::Constant(1, i / 100.0));
        rows(i, 0) = i / 100.0;
    }
    Eigen::VectorXd mean, sd;
    g.posterior_batch(rows, ctx, mean, sd);
    for (double tau : {80.0, 120.0, 150.0}) {
        std::vector<bool> keep = black_filter(mean, sd, 2.0, tau, std::nullopt);
        int kept = 0;
        for (int i = 0; i <= 100; ++i) {
            double m, s;
            oracle::posterior(g, pts[i], ctx, m, s);
            CHECK(keep[i] == (m - 2.0 * s > tau));
            kept += keep[i];
        }
        CHECK(kept > 0);
    }
    // beta = 0 with every mean below tau: only the fallback survives.
    std::vector<bool> only = black_filter(mean, sd, 0.0, 1e6, std::size_t{7});
    for (int i = 0; i <= 100; ++i) CHECK(only[i] == (i == 7));
    // Larger beta never grows the set.
    std::size_t prev = 102;
    for (double beta = 0.0; beta <= 4.0; beta += 0.5) {
        auto k = black_filter(mean, sd, beta, 120.0, std::nullopt);
        std::size_t n = std::count(k.begin(), k.end(), true);
        CHECK(n <= prev);
        prev = n;
    }
    // A training input far above tau is kept.
    double m0, s0;
    oracle::posterior(g, Point::Constant(1, 0.5), ctx, m0, s0);
    CHECK(m0 - 2 * s0 > 150.0);
}

TEST_CASE("white filter") {
    KnobSpace s({{"innodb_buffer_pool_size", KnobKind::Integer, 128, 16384, {}, 128.0},
                 {"innodb_thread_concurrency", KnobKind::Integer, 0, 64, {}, 0.0}});
    RuleSet rules = RuleSet::from_json_text(R"([
        {"id":"mem","knob":"innodb_buffer_pool_size","min":"1024","max":"8192"},
        {"id":"thr","knob":"innodb_thread_concurrency","min":"vcpus / 2"}])");
    EnvMetrics m{{"vcpus", 8}};
    auto at = [&](double pool, double thr) { return s.normalize(Configuration{{pool, thr}}); };
    std::vector<Point> pts{at(16384, 8), at(4096, 1), at(4096, 8), at(1024, 4)};
    WhiteFilterResult r = white_filter(pts, rules, s, m, std::size_t{0}, std::nullopt);
    CHECK(r.keep == std::vector<bool>{false, false, true, true});
    CHECK(r.conflicts == std::vector<std::size_t>{0}); // "mem" rejects the black-box top choice
    WhiteFilterResult ig = white_filter(pts, rules, s, m, std::size_t{1}, std::size_t{0});
    CHECK(ig.keep == std::vector<bool>{true, false, true, true});
    CHECK(ig.conflicts == std::vector<std::size_t>{1});
    WhiteFilterResult none = white_filter(pts, RuleSet{}, s, m, std::size_t{0}, std::nullopt);
    CHECK(none.keep == std::vector<bool>(4, true));
    CHECK(none.conflicts.empty());

    RuleSet bad = RuleSet::from_json_text(R"([{"id":"x","knob":"missing","max":"1"}])");
    CHECK_THROWS_AS(white_filter(pts, bad, s, m, std::nullopt, std::nullopt), InvalidInput);
}

TEST_CASE("boundary on a two-dimensional grid") {
    const int g = 15;
    const double h = 1.0 / (g - 1);
    std::vector<Point> pts;
    std::vector<bool> safe;
    auto inside = [&](int i, int j) {
        double x = i * h - 0.45, y = j * h - 0.55;
        return x * x + 2 * y * y < 0.09;
    };
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < g; ++j) {
            Point p(2);
            p << i * h, j * h;
            pts.push_back(p);
            safe.push_back(inside(i, j));
        }
    Subspace big = Subspace::hypercube(Point::Constant(2, 0.5), 100.0);
    std::vector<bool> b = flag_boundary(pts, safe, big, 4);
    int count = 0;
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < g; ++j) {
            bool expect = false;
            if (inside(i, j)) {
                REQUIRE(i > 0);
                REQUIRE(j > 0);
                REQUIRE(i < g - 1);
                REQUIRE(j < g - 1);
                expect = !inside(i - 1, j) || !inside(i + 1, j) || !inside(i, j - 1) || !inside(i, j + 1);
            }
            CHECK(b[i * g + j] == expect);
            count += expect;
        }
    CHECK(count > 4);
}

TEST_CASE("all safe, no rules: boundary is near the surface") {
    KnobSpace s = unit_space(2);
    Subspace h = Subspace::hypercube(Point::Constant(2, 0.5), 0.2);
    std::mt19937_64 rng(4);
    CandidateSet c = discretize(h, 40, s, rng);
    std::vector<bool> safe(c.size(), true);
    std::vector<bool> b = flag_boundary(c.points, safe, h, 4);
    double min_b = 1, max_nb = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        double r = (c.points[i] - h.center).norm();
        if (b[i]) min_b = std::min(min_b, r);
        else max_nb = std::max(max_nb, r);
    }
    CHECK(std::count(b.begin(), b.end(), true) > 0);
    CHECK(max_nb < 0.2);
    CHECK(min_b > 0.05);
    CHECK_FALSE(b[0]); // the center
}

TEST_CASE("assessment with only the fallback") {
    KnobSpace s = unit_space(1);
    GpModel g = toy_model_1d();
    Subspace h = Subspace::hypercube(Point::Constant(1, 0.5), 0.1);
    std::mt19937_64 rng(5);
    SafetyOptions opt;
    opt.beta = 0.0;
    opt.tau = 1e6;
    Point fb = Point::Constant(1, 0.123);
    SafetySet set = build_safety_set(h, 10, g, Context::Constant(2, 0.3), opt, nullptr, s, {}, {}, fb, rng);
    REQUIRE(set.fallback.has_value());
    CHECK(set.candidates.points[*set.fallback] == fb);
    CHECK(set.safe_indices() == std::vector<std::size_t>{*set.fallback});
    CHECK(set.boundary_indices() == std::vector<std::size_t>{*set.fallback});
    CHECK_FALSE(set.has_unevaluated_safe());
    CHECK_FALSE(set.black_top.has_value());
}

TEST_CASE("assessment reports conflicts and honours the ignored rule") {
    KnobSpace s = unit_space(1);
    GpModel g = toy_model_1d();
    Subspace h = Subspace::hypercube(Point::Constant(1, 0.5), 0.3);
    RuleSet rules = RuleSet::from_json_text(R"([{"id":"cap","knob":"k0","max":"0.3"}])");
    SafetyOptions opt;
    opt.tau = 50.0;
    std::mt19937_64 rng(6);
    SafetySet a = build_safety_set(h, 20, g, Context::Constant(2, 0.3), opt, &rules, s, {}, {}, std::nullopt, rng);
    REQUIRE(a.black_top.has_value());
    CHECK(a.candidates.points[*a.black_top][0] > 0.3);
    CHECK(a.conflicts == std::vector<std::size_t>{0});
    for (std::size_t i : a.safe_indices()) CHECK(a.candidates.points[i][0] <= 0.3);

    rules.ignored = 0;
    std::mt19937_64 rng2(6);
    SafetySet b = build_safety_set(h, 20, g, Context::Constant(2, 0.3), opt, &rules, s, {}, {}, std::nullopt, rng2);
    CHECK(b.ignored_rule == std::optional<std::size_t>(0));
    CHECK(b.conflicts.empty());
    CHECK(b.safe[*b.black_top]);
    for (std::size_t i : b.safe_indices()) CHECK(h.contains(b.candidates.points[i]));
}
