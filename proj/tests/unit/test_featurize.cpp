#include <doctest.h>

#include <algorithm>
#include <random>

#include "safetune/featurize.hpp"
#include "safetune/knobspace.hpp"

using namespace safetune;

// Reference embeddings from tests/oracles/embed_reference.py.
TEST_CASE("embedding matches the reference hash") {
    const double ref[6] = {0.4107934818813813, 0.4870829678129667, 0.33733720913016485,
                           0.4457873020037875, 0.45709474148545864, 0.2693335918987468};
    Eigen::VectorXd v = embed_query("SELECT c FROM t WHERE c > 5");
    REQUIRE(v.size() == 6);
    for (int i = 0; i < 6; ++i) {
        CHECK(v[i] == doctest::Approx(ref[i]).epsilon(1e-14));
    }
    CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-14));

    const double one[6] = {0.33945704568061824, 0.4551191698896315, 0.138850727215086,
                           0.6121700318474402,  0.49239001421786005, 0.2028690634252567};
    Eigen::VectorXd s = embed_query("select");
    for (int i = 0; i < 6; ++i) {
        CHECK(s[i] == doctest::Approx(one[i]).epsilon(1e-14));
    }
}

TEST_CASE("embedding determinism and repeated tokens") {
    CHECK(embed_query("SELECT a FROM b") == embed_query("SELECT a FROM b"));
    Eigen::VectorXd v = token_vector("select", FeaturizeConfig{}.seed);
    Eigen::VectorXd rep = embed_query("SELECT select, SeLeCt;");
    CHECK((rep - v).norm() < 1e-14);
    CHECK(tokenize_sql("Select a.b_c,1") == std::vector<std::string>{"select", "a", "b_c", "1"});
}

TEST_CASE("punctuation-only text embeds to zero; empty text throws") {
    CHECK(embed_query(";;; ,").norm() == 0.0);
    CHECK_THROWS_AS(embed_query(""), InvalidInput);
}

namespace {

std::vector<OptimizerStats> stats(std::size_t n, OptimizerStats s = {}) { return std::vector<OptimizerStats>(n, s); }

} // namespace

TEST_CASE("window features") {
    std::vector<QueryEvent> q{{"select 1", 0.1}, {"select 1", 0.5}};
    Context c = featurize_window(q, stats(2, {100.0, 50.0, 1}), 1.0);
    REQUIRE(c.size() == 10);
    CHECK(c[6] == doctest::Approx(0.2)); // 2 / 1 s / 10
    CHECK(c[9] == 1.0);
    CHECK(c[8] == doctest::Approx(0.5));

    std::vector<OptimizerStats> mixed{{10.0, 50.0, 0}, {10.0, 100.0, 1}};
    Context m = featurize_window(q, mixed, 1.0);
    CHECK(m[8] == doctest::Approx(0.75));
    CHECK(m[9] == doctest::Approx(0.5));
    CHECK(m[7] == doctest::Approx(std::log1p(10.0) / FeaturizeConfig{}.max_log_rows));
    CHECK(c.head(6).norm() <= 1.0 + 1e-12);

    // Arrival rate saturates.
    std::vector<QueryEvent> many(50, QueryEvent{"select 1", 0.0});
    CHECK(featurize_window(many, stats(50), 1.0)[6] == 1.0);
}

TEST_CASE("window features are order invariant") {
    std::vector<QueryEvent> q{{"select a from t", 0}, {"update t set a = 1", 1}, {"delete from u", 2}};
    std::vector<OptimizerStats> s{{100, 10, 0}, {1e6, 90, 1}, {5, 50, 1}};
    Context base = featurize_window(q, s, 10.0);
    std::vector<int> order{0, 1, 2};
    while (std::next_permutation(order.begin(), order.end())) {
        std::vector<QueryEvent> pq;
        std::vector<OptimizerStats> ps;
        for (int i : order) {
            pq.push_back(q[i]);
            ps.push_back(s[i]);
        }
        CHECK((featurize_window(pq, ps, 10.0) - base).norm() < 1e-14);
    }
}

TEST_CASE("window errors") {
    std::vector<QueryEvent> q{{"select 1", 0}};
    CHECK_THROWS_AS(featurize_window({}, {}, 1.0), InvalidInput);
    CHECK_THROWS_AS(featurize_window(q, stats(2), 1.0), InvalidInput);
    CHECK_THROWS_AS(featurize_window(q, stats(1), 0.0), InvalidInput);
    CHECK_THROWS_AS(featurize_window(q, {{1, 120, 0}}, 1.0), InvalidInput);
    CHECK_THROWS_AS(featurize_window(q, {{1, 50, 2}}, 1.0), InvalidInput);
}
