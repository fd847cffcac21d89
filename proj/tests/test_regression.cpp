#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "qbsde/paths.hpp"
#include "qbsde/regression.hpp"

using namespace qbsde;

TEST_CASE("constant targets give a constant model with zero residual") {
    std::vector<double> x(500), y(500, 3.25);
    std::mt19937_64 gen(1);
    std::uniform_real_distribution<double> unif(-1, 1);
    for (auto& v : x) v = unif(gen);
    auto model = fit_condexp(x, 500, 1, y, BasisSpec{3});
    CHECK(model.residual_rms == doctest::Approx(0.0).epsilon(1e-12));
    const double probe[] = {0.37};
    CHECK(model.predict(probe) == doctest::Approx(3.25).epsilon(1e-12));
}

TEST_CASE("exact linear relation is recovered to machine precision") {
    std::vector<double> x(400), y(400);
    std::mt19937_64 gen(2);
    std::uniform_real_distribution<double> unif(-2, 2);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = unif(gen);
        y[i] = 3.0 * x[i] + 2.0;
    }
    auto model = fit_condexp(x, 400, 1, y, BasisSpec{1});
    for (double probe : {-1.5, 0.0, 0.8}) {
        const double p[] = {probe};
        CHECK(model.predict(p) == doctest::Approx(3.0 * probe + 2.0).epsilon(1e-10));
    }
    CHECK(model.residual_rms <= 1e-10);
}

TEST_CASE("noisy quadratic is recovered within regression tolerance") {
    const long M = 10000;
    std::vector<double> x(M), y(M);
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> unif(-2, 2);
    std::normal_distribution<double> noise(0.0, 0.01);
    for (long i = 0; i < M; ++i) {
        x[i] = unif(gen);
        y[i] = x[i] * x[i] + noise(gen);
    }
    auto model = fit_condexp(x, M, 1, y, BasisSpec{2});
    const double p[] = {1.0};
    CHECK(model.predict(p) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("degenerate feature column reduces to the mean") {
    std::vector<double> x(200, 7.0), y(200);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<double>(i % 5);
    auto model = fit_condexp(x, 200, 1, y, BasisSpec{4});
    const double p[] = {7.0};
    CHECK(model.predict(p) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("rank-deficient design errors without ridge, succeeds with it") {
    // Duplicate coordinate makes the expanded design exactly collinear.
    const long M = 300;
    std::vector<double> x(2 * M), y(M);
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> unif(-1, 1);
    for (long i = 0; i < M; ++i) {
        x[2 * i] = unif(gen);
        x[2 * i + 1] = x[2 * i];
        y[i] = x[2 * i];
    }
    CHECK_THROWS_AS(fit_condexp(x, M, 2, y, BasisSpec{2}), SingularDesign);
    auto model = fit_condexp(x, M, 2, y, BasisSpec{2}, 1e-8);
    const double p[] = {0.5, 0.5};
    CHECK(model.predict(p) == doctest::Approx(0.5).epsilon(1e-4));
}

TEST_CASE("underdetermined fit is rejected") {
    std::vector<double> x = {0.1, 0.4, -0.3, 0.9};
    std::vector<double> y(4, 1.0);
    CHECK_THROWS_AS(fit_condexp(x, 4, 1, y, BasisSpec{4}), InvalidConfig);
}

TEST_CASE("prediction clamp stays within the target range") {
    std::vector<double> x(200), y(200);
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> unif(-1, 1);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = unif(gen);
        y[i] = std::exp(x[i]);
    }
    auto model = fit_condexp(x, 200, 1, y, BasisSpec{4}, 0.0, true);
    const double p[] = {50.0};  // far outside the sample
    const double v = model.predict(p);
    CHECK(v >= std::exp(-1.0) - 1e-12);
    CHECK(v <= std::exp(1.0) + 1e-12);
}

TEST_CASE("oracle: constant payoff has zero standard error") {
    auto est = oracle_condexp_brownian([](double) { return 4.5; }, 0.0, 1.0, 0.0, 1000, 9);
    CHECK(est.value == doctest::Approx(4.5));
    CHECK(est.std_error == doctest::Approx(0.0));
}

TEST_CASE("oracle: martingale property of W") {
    auto est = oracle_condexp_brownian([](double w) { return w; }, 0.5, 1.0, 0.8, 100000, 10);
    CHECK(std::abs(est.value - 0.8) <= 3.0 * est.std_error);
}

TEST_CASE("oracle: Gaussian moment generating function") {
    auto est =
        oracle_condexp_brownian([](double w) { return std::exp(2.0 * w); }, 0.0, 1.0, 0.0,
                                100000, 11);
    CHECK(std::abs(est.value - std::exp(2.0)) <= 3.0 * est.std_error);
}

TEST_CASE("tower property: fit on simulated states reproduces a known function") {
    // target = h(W_t) exactly; the fit must return h within regression tolerance.
    auto e = simulate_brownian(TimeGrid(1.0, 2), 1, 20000, 21);
    std::vector<double> feat(20000), target(20000);
    for (long m = 0; m < 20000; ++m) {
        feat[m] = e.brownian(1, m);
        target[m] = feat[m] * feat[m] - 1.0;
    }
    auto model = fit_condexp(feat, 20000, 1, target, BasisSpec{4});
    for (double probe : {-1.0, 0.0, 0.5, 1.5}) {
        const double p[] = {probe};
        CHECK(model.predict(p) == doctest::Approx(probe * probe - 1.0).epsilon(1e-8));
    }
}

TEST_CASE("fit agrees with the oracle on random probe states") {
    // E[W_T^2 | W_t = w] = w^2 + (T - t): regression on simulated paths vs
    // the nested oracle at probe points.
    const long M = 50000;
    auto e = simulate_brownian(TimeGrid(1.0, 4), 1, M, 22);
    std::vector<double> feat(M), target(M);
    for (long m = 0; m < M; ++m) {
        feat[m] = e.brownian(2, m);  // t = 0.5
        target[m] = e.brownian(4, m) * e.brownian(4, m);
    }
    auto model = fit_condexp(feat, M, 1, target, BasisSpec{4});
    std::mt19937_64 gen(6);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (int k = 0; k < 20; ++k) {
        const double w = unif(gen);
        auto oracle = oracle_condexp_brownian([](double x) { return x * x; }, 0.5, 1.0, w,
                                              20000, 100 + k);
        const double p[] = {w};
        const double fit = model.predict(p);
        // Combined tolerance: oracle noise plus regression bias allowance.
        CHECK(std::abs(fit - oracle.value) <= 3.0 * oracle.std_error + 0.02);
    }
}

TEST_CASE("exp features augment the basis") {
    std::vector<double> x(2000), y(2000);
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> unif(-1, 1);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = unif(gen);
        y[i] = std::exp(x[i]);
    }
    auto plain = fit_condexp(x, 2000, 1, y, BasisSpec{1});
    auto augmented = fit_condexp(x, 2000, 1, y, BasisSpec{1, {}, {1.0}});
    CHECK(augmented.residual_rms < 0.1 * plain.residual_rms);
}
