#include <doctest.h>

#include <random>

#include "safetune/classifier.hpp"

using namespace safetune;

namespace {

struct Blobs {
    std::vector<Eigen::VectorXd> x;
    std::vector<int> y;
    std::vector<Eigen::VectorXd> centers;
};

Blobs make_blobs(int k, int per, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.03);
    Blobs b;
    for (int c = 0; c < k; ++c) {
        Eigen::VectorXd center = Eigen::VectorXd::Constant(10, 0.1);
        center[c % 10] = 0.8;
        center[(c + 3) % 10] += 0.1 * c;
        b.centers.push_back(center);
    }
    for (int i = 0; i < per; ++i) {
        for (int c = 0; c < k; ++c) {
            Eigen::VectorXd p = b.centers[c];
            for (int d = 0; d < 10; ++d) p[d] += g(rng);
            b.x.push_back(p);
            b.y.push_back(c);
        }
    }
    return b;
}

int nearest_centroid(const std::vector<Eigen::VectorXd>& centers, const Eigen::VectorXd& x) {
    int best = 0;
    for (int c = 1; c < static_cast<int>(centers.size()); ++c) {
        if ((x - centers[c]).norm() < (x - centers[best]).norm()) best = c;
    }
    return best;
}

} // namespace

TEST_CASE("single class") {
    Blobs b = make_blobs(1, 20, 1);
    auto clf = LinearOvrClassifier::train(b.x, b.y);
    CHECK(clf.predict(Eigen::VectorXd::Zero(10)) == 0);
    CHECK(clf.predict(Eigen::VectorXd::Constant(10, 5.0)) == 0);
}

TEST_CASE("separable blobs") {
    for (int k = 2; k <= 4; ++k) {
        Blobs b = make_blobs(k, 30, 10 + k);
        auto clf = LinearOvrClassifier::train(b.x, b.y);
        int correct = 0;
        for (std::size_t i = 0; i < b.x.size(); ++i) correct += clf.predict(b.x[i]) == b.y[i];
        CHECK(correct == static_cast<int>(b.x.size()));
        // Fresh draws near each blob agree with the centroid-nearest oracle.
        Blobs q = make_blobs(k, 10, 99 + k);
        for (const auto& x : q.x) CHECK(clf.predict(x) == nearest_centroid(b.centers, x));
    }
}

TEST_CASE("ties go to the lowest class") {
    Eigen::MatrixXd w(3, 3);
    w << 1, 0, 0,
         1, 0, 0,
         0, 1, 0;
    LinearOvrClassifier clf(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2), w);
    Eigen::VectorXd x(2);
    x << 2.0, 1.0;
    CHECK(clf.predict(x) == 0);
    x << 1.0, 1.0; // all three tie
    CHECK(clf.predict(x) == 0);
    x << 0.0, 1.0;
    CHECK(clf.predict(x) == 2);
}

TEST_CASE("constant features do not break standardization") {
    std::vector<Eigen::VectorXd> x;
    std::vector<int> y;
    for (int i = 0; i < 20; ++i) {
        Eigen::VectorXd p = Eigen::VectorXd::Constant(3, 0.5);
        p[0] = i < 10 ? 0.0 : 1.0;
        x.push_back(p);
        y.push_back(i < 10 ? 0 : 1);
    }
    auto clf = LinearOvrClassifier::train(x, y);
    CHECK(clf.predict(x[0]) == 0);
    CHECK(clf.predict(x[15]) == 1);
}
