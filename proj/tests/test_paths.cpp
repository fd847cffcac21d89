#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numeric>

#include "qbsde/parallel.hpp"
#include "qbsde/paths.hpp"
#include "qbsde/rng.hpp"

using namespace qbsde;

TEST_CASE("inverse normal cdf hits tabulated quantiles") {
    CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
    CHECK(inverse_normal_cdf(0.025) == doctest::Approx(-1.959963984540054).epsilon(1e-12));
    CHECK(inverse_normal_cdf(0.8413447460685429) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("philox draws are deterministic and distinct per address") {
    const double a = Philox4x32::uniform(42, {1, 0, 3, 0});
    const double b = Philox4x32::uniform(42, {1, 0, 3, 0});
    const double c = Philox4x32::uniform(42, {2, 0, 3, 0});
    const double d = Philox4x32::uniform(43, {1, 0, 3, 0});
    CHECK(a == b);
    CHECK(a != c);
    CHECK(a != d);
    CHECK(a > 0.0);
    CHECK(a < 1.0);
}

TEST_CASE("ensembles are reproducible across runs and thread counts") {
    auto e1 = simulate_brownian(TimeGrid(1.0, 8), 2, 64, 2024);
    auto e2 = simulate_brownian(TimeGrid(1.0, 8), 2, 64, 2024);
    CHECK(e1.dw == e2.dw);

    max_threads() = 3;
    auto e3 = simulate_brownian(TimeGrid(1.0, 8), 2, 64, 2024);
    max_threads() = 1;
    CHECK(e1.dw == e3.dw);

    auto other = simulate_brownian(TimeGrid(1.0, 8), 2, 64, 2025);
    CHECK(e1.dw != other.dw);
}

TEST_CASE("increment statistics match the Brownian law") {
    const long M = 100000;
    auto e = simulate_brownian(TimeGrid(1.0, 1), 1, M, 7);
    const double dt = e.grid.dt();
    double mean = 0.0, var = 0.0;
    for (long m = 0; m < M; ++m) mean += e.increment(0, m);
    mean /= static_cast<double>(M);
    for (long m = 0; m < M; ++m) var += (e.increment(0, m) - mean) * (e.increment(0, m) - mean);
    var /= static_cast<double>(M - 1);
    CHECK(std::abs(mean) <= 5.0 * std::sqrt(dt / static_cast<double>(M)));
    CHECK(var >= 0.9 * dt);
    CHECK(var <= 1.1 * dt);
}

TEST_CASE("cumulative sum at the horizon has variance near T") {
    const long M = 100000;
    auto e = simulate_brownian(TimeGrid(2.0, 16), 1, M, 11);
    double var = 0.0;
    for (long m = 0; m < M; ++m) {
        const double wT = e.brownian(16, m);
        var += wT * wT;
    }
    var /= static_cast<double>(M);
    CHECK(var >= 0.9 * 2.0);
    CHECK(var <= 1.1 * 2.0);
}

TEST_CASE("degenerate forward dynamics keep the initial state") {
    auto e = simulate_brownian(TimeGrid(1.0, 10), 1, 32, 3);
    const double x0[] = {1.5};
    simulate_forward_sde([](double, std::span<const double>, std::span<double> b) { b[0] = 0.0; },
                         [](double, std::span<const double>, std::span<double> s) { s[0] = 0.0; },
                         0.0, x0, e);
    for (long i = 0; i <= 10; ++i)
        for (long m = 0; m < 32; ++m) CHECK(e.state(i, m) == 1.5);
}

TEST_CASE("unit diffusion reproduces the Brownian path exactly") {
    auto e = simulate_brownian(TimeGrid(1.0, 10), 1, 32, 3);
    const double x0[] = {0.0};
    simulate_forward_sde([](double, std::span<const double>, std::span<double> b) { b[0] = 0.0; },
                         [](double, std::span<const double>, std::span<double> s) { s[0] = 1.0; },
                         0.0, x0, e);
    for (long i = 0; i <= 10; ++i)
        for (long m = 0; m < 32; ++m)
            CHECK(e.state(i, m) == doctest::Approx(e.brownian(i, m)).epsilon(1e-14));
}

TEST_CASE("geometric dynamics hit the closed-form mean") {
    const long M = 100000;
    auto e = simulate_brownian(TimeGrid(1.0, 64), 1, M, 99);
    const double x0[] = {1.0};
    simulate_forward_sde(
        [](double, std::span<const double> x, std::span<double> b) { b[0] = 0.1 * x[0]; },
        [](double, std::span<const double> x, std::span<double> s) { s[0] = 0.2 * x[0]; }, 0.0,
        x0, e);
    double mean = 0.0, sq = 0.0;
    for (long m = 0; m < M; ++m) {
        mean += e.state(64, m);
        sq += e.state(64, m) * e.state(64, m);
    }
    mean /= static_cast<double>(M);
    sq /= static_cast<double>(M);
    const double se = std::sqrt((sq - mean * mean) / static_cast<double>(M));
    CHECK(std::abs(mean - std::exp(0.1)) <= 3.0 * se + 2e-3);  // mean + O(dt) bias
}

TEST_CASE("start node off the grid is rejected") {
    auto e = simulate_brownian(TimeGrid(1.0, 10), 1, 4, 3);
    const double x0[] = {0.0};
    CHECK_THROWS_AS(
        simulate_forward_sde(
            [](double, std::span<const double>, std::span<double> b) { b[0] = 0.0; },
            [](double, std::span<const double>, std::span<double> s) { s[0] = 0.0; }, 0.123, x0,
            e),
        InvalidConfig);
}

TEST_CASE("exploding drift reports the failing step") {
    auto e = simulate_brownian(TimeGrid(1.0, 4), 1, 4, 3);
    const double x0[] = {1.0};
    CHECK_THROWS_AS(simulate_forward_sde(
                        [](double, std::span<const double> x, std::span<double> b) {
                            b[0] = x[0] * 1e160;
                        },
                        [](double, std::span<const double>, std::span<double> s) { s[0] = 0.0; },
                        0.0, x0, e),
                    NumericalBlowup);
}

TEST_CASE("coarsening preserves node values and terminal points") {
    auto fine = simulate_brownian(TimeGrid(1.0, 16), 1, 100, 5);
    auto coarse = coarsen(fine, 4);
    CHECK(coarse.grid.steps == 4);
    for (long m = 0; m < 100; ++m) {
        CHECK(coarse.brownian(4, m) == fine.brownian(16, m));
        CHECK(coarse.brownian(1, m) == fine.brownian(4, m));
        double sum = 0.0;
        for (long i = 0; i < 4; ++i) sum += fine.increment(i, m);
        CHECK(coarse.increment(0, m) == doctest::Approx(sum).epsilon(1e-15));
    }
}

TEST_CASE("binary dump round-trips bit-exactly") {
    auto e = simulate_brownian(TimeGrid(0.5, 6), 2, 37, 123456789);
    const std::string path = "ensemble_roundtrip.bin";
    dump_ensemble(e, path);
    auto back = load_ensemble(path);
    std::remove(path.c_str());
    CHECK(back.seed == e.seed);
    CHECK(back.grid == e.grid);
    CHECK(back.dim_w == e.dim_w);
    CHECK(back.num_paths == e.num_paths);
    CHECK(back.dw == e.dw);
    CHECK(back.w == e.w);
}

TEST_CASE("zero paths or steps rejected") {
    CHECK_THROWS_AS(simulate_brownian(TimeGrid(1.0, 4), 0, 10, 1), InvalidConfig);
    CHECK_THROWS_AS(simulate_brownian(TimeGrid(1.0, 4), 1, 0, 1), InvalidConfig);
    CHECK_THROWS_AS(TimeGrid(1.0, 0), InvalidConfig);
}

TEST_CASE("Euler strong error shrinks at the half-order rate under refinement") {
    // Against the exact geometric solution driven by the same Brownian path;
    // nested coarsening keeps W_T identical across levels.
    const double a = 0.1, b = 0.2, T = 1.0;
    const long M = 20000;
    auto fine = simulate_brownian(TimeGrid(T, 128), 1, M, 17);
    std::vector<double> log_dt, log_err;
    for (long steps : {8L, 16L, 32L, 64L, 128L}) {
        auto e = steps == 128 ? fine : coarsen(fine, 128 / steps);
        const double x0[] = {1.0};
        simulate_forward_sde(
            [a](double, std::span<const double> x, std::span<double> out) {
                out[0] = a * x[0];
            },
            [b](double, std::span<const double> x, std::span<double> out) {
                out[0] = b * x[0];
            },
            0.0, x0, e);
        double err = 0.0;
        for (long m = 0; m < M; ++m) {
            const double exact =
                std::exp((a - 0.5 * b * b) * T + b * e.brownian(e.grid.steps, m));
            err += std::abs(e.state(e.grid.steps, m) - exact);
        }
        err /= static_cast<double>(M);
        log_dt.push_back(std::log(T / static_cast<double>(steps)));
        log_err.push_back(std::log(err));
    }
    // Least-squares slope of log error against log dt.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(log_dt.size());
    for (std::size_t i = 0; i < log_dt.size(); ++i) {
        sx += log_dt[i];
        sy += log_err[i];
        sxx += log_dt[i] * log_dt[i];
        sxy += log_dt[i] * log_err[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope >= 0.3);
    CHECK(slope <= 0.7);
}
