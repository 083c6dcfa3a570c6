#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "pdiv/diffcore.hpp"
#include "pdiv/errors.hpp"
#include "pdiv/metrics.hpp"

using namespace pdiv;

namespace {

Matrix random_stochastic(Rng& rng, int n, int c) {
    Matrix logits(n, c);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) logits(i, j) = rng.uniform(-2.0, 2.0);
    }
    return softmax(logits);
}

// triple-loop argmax disagreement count, independent of the library path
double disagreement_oracle(const PredictionTensor& t) {
    const int m = t.members(), n = t.rows(), c = t.classes();
    auto argmax = [&](int member, int row) {
        int best = 0;
        for (int k = 1; k < c; ++k) {
            if (t.member[member](row, k) > t.member[member](row, best)) best = k;
        }
        return best;
    };
    long long count = 0;
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            for (int r = 0; r < n; ++r) {
                if (argmax(i, r) != argmax(j, r)) ++count;
            }
        }
    }
    return static_cast<double>(count) / n;
}

}  // namespace

TEST_CASE("disagreement: identical hypotheses give zero") {
    Rng rng(3);
    const Matrix p = random_stochastic(rng, 6, 3);
    PredictionTensor t;
    t.member = {p, p, p};
    CHECK(disagreement(t) == 0.0);
}

TEST_CASE("disagreement: M=2 with one differing sample out of four") {
    Matrix a(4, 2), b(4, 2);
    a << 0.9, 0.1, 0.9, 0.1, 0.9, 0.1, 0.9, 0.1;
    b << 0.9, 0.1, 0.9, 0.1, 0.9, 0.1, 0.1, 0.9;
    PredictionTensor t;
    t.member = {a, b};
    CHECK(disagreement(t) == doctest::Approx(0.5).epsilon(1e-12));       // 2 ordered pairs / 4
    CHECK(disagreement_normalized(t) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("disagreement matches the brute-force oracle and permutation symmetry") {
    Rng rng(17);
    for (int rep = 0; rep < 20; ++rep) {
        PredictionTensor t;
        const int m = 2 + static_cast<int>(rng.below(3));
        for (int i = 0; i < m; ++i) t.member.push_back(random_stochastic(rng, 6, 3));
        CHECK(disagreement(t) == doctest::Approx(disagreement_oracle(t)).epsilon(1e-12));

        PredictionTensor rev;
        for (int i = m - 1; i >= 0; --i) rev.member.push_back(t.member[i]);
        CHECK(disagreement(rev) == doctest::Approx(disagreement(t)).epsilon(1e-12));
    }
}

TEST_CASE("brier: perfect one-hot prediction scores zero") {
    Matrix p(2, 3);
    p << 1.0, 0.0, 0.0, 0.0, 1.0, 0.0;
    CHECK(brier(p, {0, 1}) == 0.0);
}

TEST_CASE("brier: [0.5, 0.5] against class 0 scores 0.5") {
    Matrix p(1, 2);
    p << 0.5, 0.5;
    CHECK(brier(p, {0}) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("brier: uniform prediction over four classes scores 0.75") {
    Matrix p = Matrix::Constant(1, 4, 0.25);
    CHECK(brier(p, {2}) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("brier decreases as mass moves toward the true class") {
    double last = 2.0;
    for (double q = 0.3; q <= 0.9; q += 0.1) {
        Matrix p(1, 3);
        p << q, (1 - q) / 2, (1 - q) / 2;
        const double b = brier(p, {0});
        CHECK(b < last);
        last = b;
    }
}

TEST_CASE("ece: all confident and correct is zero, all confident and wrong is one") {
    Matrix p(3, 2);
    p << 1.0, 0.0, 1.0, 0.0, 1.0, 0.0;
    CHECK(ece(p, {0, 0, 0}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(ece(p, {1, 1, 1}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ece matches a hand-computed binary instance") {
    // confidences 0.95, 0.95, 0.65, 0.65; bins of width 0.1
    // bin [0.9, 1.0): two samples, conf 0.95, acc 1.0 -> gap 0.05
    // bin [0.6, 0.7): two samples, conf 0.65, acc 0.5 -> gap 0.15
    // ece = 0.5 * 0.05 + 0.5 * 0.15 = 0.10
    Matrix p(4, 2);
    p << 0.95, 0.05, 0.95, 0.05, 0.65, 0.35, 0.35, 0.65;
    const std::vector<int> labels = {0, 0, 0, 0};
    CHECK(ece(p, labels) == doctest::Approx(0.10).epsilon(1e-12));
}

TEST_CASE("ece is zero when each bin's accuracy equals its mean confidence") {
    // one bin [0.7, 0.8): confidences all 0.75, accuracy 3/4
    Matrix p(4, 2);
    p << 0.75, 0.25, 0.75, 0.25, 0.75, 0.25, 0.75, 0.25;
    const std::vector<int> labels = {0, 0, 0, 1};
    CHECK(ece(p, labels) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("ci_difference: equal accuracies overlap zero symmetrically") {
    const CIResult r = ci_difference(0.8, 50, 0.8, 50);
    CHECK(r.p_diff == 0.0);
    CHECK(r.lo == doctest::Approx(-r.hi).epsilon(1e-12));
    CHECK(r.overlaps_zero);
}

TEST_CASE("ci_difference reproduces the hand-computed example") {
    const CIResult r = ci_difference(0.8, 100, 0.7, 100);
    CHECK(r.se_diff == doctest::Approx(std::sqrt(0.0037)).epsilon(1e-12));
    CHECK(r.lo == doctest::Approx(0.0392).epsilon(1e-3));
    CHECK(r.hi == doctest::Approx(0.1608).epsilon(1e-3));
    CHECK(!r.overlaps_zero);
}

TEST_CASE("ci_difference: z=2 doubles the half width exactly") {
    const CIResult z1 = ci_difference(0.8, 100, 0.7, 100, 1.0);
    const CIResult z2 = ci_difference(0.8, 100, 0.7, 100, 2.0);
    CHECK((z2.hi - z2.lo) == doctest::Approx(2.0 * (z1.hi - z1.lo)).epsilon(1e-12));
}

TEST_CASE("ci_difference width shrinks as sample counts grow") {
    double last = 1e9;
    for (const int n : {10, 40, 160, 640}) {
        const CIResult r = ci_difference(0.75, n, 0.6, n);
        CHECK((r.hi - r.lo) < last);
        last = r.hi - r.lo;
    }
}

TEST_CASE("ci_difference validates inputs") {
    CHECK_THROWS_AS(ci_difference(0.5, 0, 0.5, 10), ValidationError);
    CHECK_THROWS_AS(ci_difference(1.5, 10, 0.5, 10), ValidationError);
}

TEST_CASE("eval report serializes to JSON with every field") {
    EvalReport r;
    r.accuracy = 0.875;
    r.brier = 0.2;
    r.ece = 0.01;
    r.disagreement = 0.5;
    r.disagreement_normalized = 0.25;
    r.per_class_accuracy = {1.0, 0.75};
    const std::string j = r.to_json();
    CHECK(j.find("\"accuracy\":0.875") != std::string::npos);
    CHECK(j.find("\"per_class_accuracy\":[1.0,0.75]") != std::string::npos);
}
