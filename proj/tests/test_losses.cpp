#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "imbk/errors.hpp"
#include "imbk/gradcheck.hpp"
#include "imbk/losses.hpp"
#include "imbk/rates.hpp"
#include "imbk/rng.hpp"

using namespace imbk;

namespace {

LabelVector labels(int size, std::initializer_list<ClassId> classes) {
    return LabelVector::from_classes(size, std::vector<ClassId>(classes));
}

// random z in [-5, 5]
std::vector<double> random_logits(Rng& rng, int c) {
    std::vector<double> z(static_cast<std::size_t>(c));
    for (double& v : z) v = -5.0 + 10.0 * rng.uniform01();
    return z;
}

constexpr double kTight = 1e-12;

}  // namespace

TEST_CASE("softmax probabilities on (2,1,0)") {
    std::vector<double> p = softmax_probs({2.0, 1.0, 0.0});
    CHECK(p[0] == doctest::Approx(0.66524095577482189).epsilon(kTight));
    CHECK(p[1] == doctest::Approx(0.24472847105479765).epsilon(kTight));
    CHECK(p[2] == doctest::Approx(0.090030573170380458).epsilon(kTight));
}

TEST_CASE("softmax probabilities are shift-invariant and stable") {
    std::vector<double> p = softmax_probs({2.0, 1.0, 0.0});
    std::vector<double> q = softmax_probs({2.0 + 1000.0, 1.0 + 1000.0, 0.0 + 1000.0});
    for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(q[i]).epsilon(kTight));
    std::vector<double> big = softmax_probs({1000.0, 0.0});
    CHECK(std::isfinite(big[0]));
    CHECK(big[0] == doctest::Approx(1.0));
    CHECK(big[1] >= 0.0);
}

TEST_CASE("softmax cross entropy: single label value and gradient") {
    LossResult r = softmax_ce({2.0, 1.0, 0.0}, labels(3, {0}));
    CHECK(r.value == doctest::Approx(0.4076059644443803).epsilon(kTight));
    // gradient = m*sigma - y with m=1
    CHECK(r.gradient[0] == doctest::Approx(0.66524095577482189 - 1.0).epsilon(kTight));
    CHECK(r.gradient[1] == doctest::Approx(0.24472847105479765).epsilon(kTight));
}

TEST_CASE("softmax cross entropy: uniform logits, three classes") {
    LossResult r = softmax_ce({0.0, 0.0, 0.0}, labels(3, {1}));
    CHECK(r.value == doctest::Approx(1.0986122886681097).epsilon(kTight));
}

TEST_CASE("multi-label softmax gradient keeps the m*sigma - y form") {
    LossResult r = softmax_ce({5.0, 4.0, -5.0}, labels(3, {0, 1}));
    const double s0 = 0.73103431559513277;
    CHECK(r.gradient[0] == doctest::Approx(2.0 * s0 - 1.0).epsilon(kTight));
    CHECK(r.gradient[0] == doctest::Approx(0.46206863119026554).epsilon(kTight));
    CHECK(r.gradient[0] > 0.0);  // labeled class pushed DOWN: the failure mode
}

TEST_CASE("concurrent softmax with zero rates, two labels") {
    RateMatrix r0(3);
    LossResult r = concurrent_softmax_ce({2.0, 1.0, 0.0}, labels(3, {0, 1}), r0);
    CHECK(r.value == doctest::Approx(0.44018969856119533).epsilon(kTight));
    // sigma*_0 = e^2/(e^2 + e^0), sigma*_1 = e^1/(e^1 + e^0)
    CHECK(r.gradient[0] == doctest::Approx(0.88079707797788244 - 1.0).epsilon(kTight));
    CHECK(r.gradient[1] == doctest::Approx(0.73105857863000488 - 1.0).epsilon(kTight));
}

TEST_CASE("concurrent softmax keeps labeled gradients non-positive") {
    LossResult r = concurrent_softmax_ce({5.0, 4.0, -5.0}, labels(3, {0, 1}), RateMatrix(3));
    CHECK(r.gradient[0] == doctest::Approx(-4.5397868702434395e-05).epsilon(1e-9));
    CHECK(r.gradient[0] < 0.0);
    CHECK(r.gradient[1] < 0.0);

    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const int c = 3 + static_cast<int>(rng.uniform_index(8));
        std::vector<double> z = random_logits(rng, c);
        // one or two labels, never all classes
        std::vector<ClassId> k{static_cast<ClassId>(rng.uniform_index(static_cast<std::size_t>(c)))};
        RateMatrix rates(c);
        for (ClassId i = 0; i < c; ++i) {
            for (ClassId j = 0; j < c; ++j) {
                if (i != j && rng.uniform01() < 0.5) rates.set(i, j, 0.9 * rng.uniform01());
            }
        }
        LossResult res = concurrent_softmax_ce(z, LabelVector::from_classes(c, k), rates);
        for (ClassId i : k) {
            CHECK(res.gradient[static_cast<std::size_t>(i)] <= 0.0);
        }
    }
}

TEST_CASE("concurrent softmax with m=1 and r=0 reduces to softmax") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const int c = 2 + static_cast<int>(rng.uniform_index(10));
        std::vector<double> z = random_logits(rng, c);
        const ClassId k = static_cast<ClassId>(rng.uniform_index(static_cast<std::size_t>(c)));
        LossResult a = concurrent_softmax_ce(z, labels(c, {k}), RateMatrix(c));
        LossResult b = softmax_ce(z, labels(c, {k}));
        CHECK(a.value == doctest::Approx(b.value).epsilon(kTight));
        for (int i = 0; i < c; ++i) {
            CHECK(a.gradient[static_cast<std::size_t>(i)] ==
                  doctest::Approx(b.gradient[static_cast<std::size_t>(i)]).epsilon(kTight));
        }
    }
}

TEST_CASE("rates raise the training probability of labeled classes") {
    // suppression removal: sigma* with rates >= sigma* without, for i in K
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const int c = 3 + static_cast<int>(rng.uniform_index(8));
        std::vector<double> z = random_logits(rng, c);
        const ClassId k = static_cast<ClassId>(rng.uniform_index(static_cast<std::size_t>(c)));
        RateMatrix rates(c);
        for (ClassId j = 0; j < c; ++j) {
            if (j != k) rates.set(k, j, rng.uniform01());
        }
        LossResult with = concurrent_softmax_ce(z, labels(c, {k}), rates);
        LossResult without = concurrent_softmax_ce(z, labels(c, {k}), RateMatrix(c));
        // gradient[k] = sigma*_k - 1, so larger sigma* = gradient closer to 0
        CHECK(with.gradient[static_cast<std::size_t>(k)] >=
              without.gradient[static_cast<std::size_t>(k)] - kTight);
        CHECK(with.value <= without.value + kTight);
    }
}

TEST_CASE("inference scoring with r=0 is plain softmax") {
    Rng rng(29);
    for (int trial = 0; trial < 50; ++trial) {
        const int c = 2 + static_cast<int>(rng.uniform_index(10));
        std::vector<double> z = random_logits(rng, c);
        std::vector<double> a = concurrent_softmax_infer(z, RateMatrix(c));
        std::vector<double> b = softmax_probs(z);
        for (int i = 0; i < c; ++i) {
            CHECK(a[static_cast<std::size_t>(i)] ==
                  doctest::Approx(b[static_cast<std::size_t>(i)]).epsilon(kTight));
        }
    }
}

TEST_CASE("inference scoring divides out suppressors per the rate") {
    RateMatrix r(3);
    r.set(0, 1, 0.5);
    std::vector<double> s = concurrent_softmax_infer({2.0, 1.0, 0.0}, r);
    // e^2 / (e^2 + 0.5 e^1 + e^0)
    CHECK(s[0] == doctest::Approx(0.75799207678664511).epsilon(kTight));
    // other rows keep the full denominator
    std::vector<double> p = softmax_probs({2.0, 1.0, 0.0});
    CHECK(s[1] == doctest::Approx(p[1]).epsilon(kTight));
    CHECK(s[2] == doctest::Approx(p[2]).epsilon(kTight));
}

TEST_CASE("inference score is monotone in the suppressor's rate") {
    RateMatrix r(3);
    double prev = concurrent_softmax_infer({2.0, 1.0, 0.0}, r)[0];
    for (double rate : {0.2, 0.5, 0.8, 1.0}) {
        r.set(0, 1, rate);
        const double cur = concurrent_softmax_infer({2.0, 1.0, 0.0}, r)[0];
        CHECK(cur > prev);
        prev = cur;
    }
}

TEST_CASE("full suppression removal drives a score to one") {
    RateMatrix r(3);
    r.set(0, 1, 1.0);
    r.set(0, 2, 1.0);
    std::vector<double> s = concurrent_softmax_infer({-3.0, 5.0, 4.0}, r);
    CHECK(s[0] == doctest::Approx(1.0).epsilon(kTight));
}

TEST_CASE("inference scores are each in (0,1] and sum to at most C") {
    Rng rng(37);
    for (int trial = 0; trial < 50; ++trial) {
        const int c = 2 + static_cast<int>(rng.uniform_index(6));
        std::vector<double> z = random_logits(rng, c);
        RateMatrix rates(c);
        for (ClassId i = 0; i < c; ++i) {
            for (ClassId j = 0; j < c; ++j) {
                if (i != j && rng.uniform01() < 0.5) rates.set(i, j, rng.uniform01());
            }
        }
        std::vector<double> s = concurrent_softmax_infer(z, rates);
        double total = 0.0;
        for (double v : s) {
            CHECK(v > 0.0);
            CHECK(v <= 1.0 + kTight);
            total += v;
        }
        CHECK(total <= c + kTight);
    }
}

TEST_CASE("binary cross entropy value and gradient") {
    LossResult r = bce_loss({2.0, 1.0, 0.0}, labels(3, {0}));
    CHECK(r.value == doctest::Approx(2.1333368791211406).epsilon(kTight));
    const double sig2 = 1.0 / (1.0 + std::exp(-2.0));
    CHECK(r.gradient[0] == doctest::Approx(sig2 - 1.0).epsilon(kTight));
    CHECK(r.gradient[2] == doctest::Approx(0.5).epsilon(kTight));
}

TEST_CASE("binary cross entropy is stable at extreme logits") {
    LossResult r = bce_loss({1000.0, -1000.0}, labels(2, {0}));
    CHECK(std::isfinite(r.value));
    CHECK(r.value == doctest::Approx(0.0));
    LossResult bad = bce_loss({-1000.0, 1000.0}, labels(2, {0}));
    CHECK(std::isfinite(bad.value));
    CHECK(bad.value == doctest::Approx(2000.0));
}

TEST_CASE("focal loss value and gradient at gamma=2, alpha=0.25") {
    LossResult r = focal_loss({2.0}, labels(1, {0}), 2.0, 0.25);
    CHECK(r.value == doctest::Approx(0.00045089070881009384).epsilon(1e-10));
    CHECK(r.gradient[0] == doctest::Approx(-0.0012177350488481916).epsilon(1e-10));
}

TEST_CASE("focal loss with gamma=0, alpha=0.5 is half of BCE") {
    Rng rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        const int c = 1 + static_cast<int>(rng.uniform_index(8));
        std::vector<double> z = random_logits(rng, c);
        LabelVector y;
        y.y.resize(static_cast<std::size_t>(c));
        for (auto& b : y.y) b = rng.uniform01() < 0.5 ? 1 : 0;
        LossResult f = focal_loss(z, y, 0.0, 0.5);
        LossResult b = bce_loss(z, y);
        CHECK(f.value == doctest::Approx(0.5 * b.value).epsilon(kTight));
        for (int i = 0; i < c; ++i) {
            CHECK(f.gradient[static_cast<std::size_t>(i)] ==
                  doctest::Approx(0.5 * b.gradient[static_cast<std::size_t>(i)]).epsilon(kTight));
        }
    }
}

TEST_CASE("focal loss rejects bad hyperparameters") {
    CHECK_THROWS_AS(focal_loss({0.0}, labels(1, {0}), -1.0, 0.25), std::invalid_argument);
    CHECK_THROWS_AS(focal_loss({0.0}, labels(1, {0}), 2.0, 1.5), std::invalid_argument);
}

TEST_CASE("effective number weights at beta=0.9, counts (10,1)") {
    std::vector<double> w = effective_number_weights({10, 1}, 0.9);
    CHECK(w[0] == doctest::Approx(0.26619760522594315).epsilon(kTight));
    CHECK(w[1] == doctest::Approx(1.7338023947740568).epsilon(kTight));
    // normalized to mean 1 over classes with samples
    CHECK((w[0] + w[1]) / 2.0 == doctest::Approx(1.0).epsilon(kTight));
}

TEST_CASE("effective number weights: beta=0 gives equal weights") {
    std::vector<double> w = effective_number_weights({100, 1, 7}, 0.0);
    for (double v : w) CHECK(v == doctest::Approx(1.0).epsilon(kTight));
}

TEST_CASE("effective number weights ignore absent classes") {
    std::vector<double> w = effective_number_weights({10, 0, 1}, 0.9);
    CHECK(w[1] == 0.0);
    CHECK((w[0] + w[2]) / 2.0 == doctest::Approx(1.0).epsilon(kTight));
    CHECK_THROWS_AS(effective_number_weights({1, 2}, 1.0), std::invalid_argument);
}

TEST_CASE("weighted softmax cross entropy matches hand computation") {
    // weights w, single label k: value = -w_k log sigma_k,
    // gradient_j = (sum_i w_i y_i) sigma_j - w_j y_j
    std::vector<double> z{2.0, 1.0, 0.0};
    std::vector<double> w{2.0, 1.0, 0.5};
    LossResult r = weighted_softmax_ce(z, labels(3, {0}), w);
    CHECK(r.value == doctest::Approx(2.0 * 0.4076059644443803).epsilon(kTight));
    std::vector<double> p = softmax_probs(z);
    CHECK(r.gradient[0] == doctest::Approx(2.0 * p[0] - 2.0).epsilon(kTight));
    CHECK(r.gradient[1] == doctest::Approx(2.0 * p[1]).epsilon(kTight));
}

TEST_CASE("label vector bookkeeping") {
    LabelVector y = labels(5, {3, 1});
    CHECK(y.size() == 5);
    CHECK(y.count() == 2);
    CHECK(y.positives() == std::vector<ClassId>{1, 3});
    CHECK(y.y[1] == 1.0);
    CHECK(y.y[0] == 0.0);
}

TEST_CASE("as-published gradient mode differs from the exact derivative") {
    // strongly asymmetric rates make the index-order difference visible
    const int c = 3;
    std::vector<double> z{1.0, 0.5, -0.5};
    RateMatrix r(c);
    r.set(0, 2, 0.8);  // r(k=0, i=2) large, r(2, 0) = 0
    LabelVector y = labels(c, {0});
    LossResult exact = concurrent_softmax_ce(z, y, r, ConcurrentGradMode::Exact);
    LossResult pub = concurrent_softmax_ce(z, y, r, ConcurrentGradMode::AsPublished);
    CHECK(exact.value == doctest::Approx(pub.value).epsilon(kTight));  // same forward
    CHECK(std::abs(exact.gradient[2] - pub.gradient[2]) > 1e-3);
}

TEST_CASE("finite differences certify every loss gradient") {
    GradCheckReport report = run_gradcheck(12, 120, 7, 1e-5, 1e-5);
    CHECK(report.all_pass);
    REQUIRE(report.rows.size() == 4);
    for (const GradCheckRow& row : report.rows) {
        INFO(row.loss);
        CHECK(row.worst_rel_err < 1e-5);
    }
}

TEST_CASE("losses reject malformed inputs") {
    CHECK_THROWS_AS(softmax_ce({1.0, 2.0}, labels(3, {0})), std::invalid_argument);
    CHECK_THROWS_AS(softmax_ce({1.0, 2.0}, labels(2, {})), std::invalid_argument);
    CHECK_THROWS_AS(bce_loss({1.0}, labels(2, {0})), std::invalid_argument);
    RateMatrix small(2);
    CHECK_THROWS_AS(concurrent_softmax_ce({1.0, 2.0, 3.0}, labels(3, {0}), small),
                    std::invalid_argument);
}
