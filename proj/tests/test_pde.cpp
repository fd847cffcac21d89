#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>

#include "qbsde/pde.hpp"

using namespace qbsde;

namespace {

PdeProblem heat_problem(std::function<double(double)> g) {
    PdeProblem p;
    p.drift = [](double, double) { return 0.0; };
    p.diffusion = [](double, double) { return 1.0; };
    p.driver = [](double, double, double, double) { return 0.0; };
    p.terminal = std::move(g);
    return p;
}

PdeProblem cole_hopf_problem() {
    PdeProblem p;
    p.drift = [](double, double) { return 0.0; };
    p.diffusion = [](double, double) { return 1.0; };
    p.driver = [](double, double, double, double grad) { return 0.5 * grad * grad; };
    p.terminal = [](double x) { return std::cos(x); };
    return p;
}

}  // namespace

TEST_CASE("harmonic terminal condition is invariant") {
    auto prob = heat_problem([](double x) { return x; });
    auto sol = solve_semilinear_fd(prob, 32, 64);
    for (std::size_t i = 0; i < sol.t_nodes.size(); i += 8)
        for (std::size_t j = 4; j + 4 < sol.x_nodes.size(); j += 16)
            CHECK(sol.at(i, j) == doctest::Approx(sol.x_nodes[j]).epsilon(1e-9));
}

TEST_CASE("heat kernel moment: g = x^2 gives u = x^2 + (T - t)") {
    auto prob = heat_problem([](double x) { return x * x; });
    prob.x_lo = -8.0;
    prob.x_hi = 8.0;
    auto sol = solve_semilinear_fd(prob, 64, 257);  // probes land on grid nodes
    for (double t : {0.0, 0.25, 0.5}) {
        for (double x : {-2.0, 0.0, 1.5}) {
            CHECK(sol.value(t, x) == doctest::Approx(x * x + (1.0 - t)).epsilon(2e-4));
        }
    }
}

TEST_CASE("quadratic gradient driver matches the change-of-variable oracle") {
    auto prob = cole_hopf_problem();
    const auto start = std::chrono::steady_clock::now();
    auto sol = solve_semilinear_fd(prob, 200, 400);
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    CHECK(elapsed < 10000);
    for (double x : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
        const double oracle = quadratic_gradient_oracle(prob.terminal, prob.horizon, 0.0, x);
        CHECK(std::abs(sol.value(0.0, x) - oracle) <= 1e-3);
    }
}

TEST_CASE("comparison principle surrogate: ordered terminals give ordered solutions") {
    auto lo = heat_problem([](double x) { return std::cos(x); });
    auto hi = heat_problem([](double x) { return std::cos(x) + 0.5; });
    auto sol_lo = solve_semilinear_fd(lo, 48, 96);
    auto sol_hi = solve_semilinear_fd(hi, 48, 96);
    for (std::size_t i = 0; i < sol_lo.t_nodes.size(); ++i)
        for (std::size_t j = 0; j < sol_lo.x_nodes.size(); ++j)
            CHECK(sol_lo.at(i, j) <= sol_hi.at(i, j) + 1e-12);
}

TEST_CASE("polynomial growth stays bounded and stable under refinement") {
    auto prob = heat_problem([](double x) { return x * x; });
    prob.growth_power = 2.0;
    double scales[2];
    int r = 0;
    for (long n : {64L, 128L}) {
        auto sol = solve_semilinear_fd(prob, n, 2 * n);
        double c = 0.0;
        for (std::size_t i = 0; i < sol.t_nodes.size(); i += 4)
            for (std::size_t j = 0; j < sol.x_nodes.size(); j += 4) {
                const double x = sol.x_nodes[j];
                c = std::max(c, std::abs(sol.at(i, j)) /
                                    (1.0 + std::pow(std::abs(x), prob.growth_power)));
            }
        scales[r++] = c;
    }
    CHECK(std::abs(scales[1] - scales[0]) <= 0.05 * scales[0]);
}

TEST_CASE("self-convergence under simultaneous grid doubling") {
    auto prob = cole_hopf_problem();
    const double probe_x = 0.7;
    double v1 = solve_semilinear_fd(prob, 50, 100).value(0.0, probe_x);
    double v2 = solve_semilinear_fd(prob, 100, 200).value(0.0, probe_x);
    double v4 = solve_semilinear_fd(prob, 200, 400).value(0.0, probe_x);
    CHECK(std::abs(v4 - v2) < std::abs(v2 - v1));
}

TEST_CASE("implicit driver sweeps agree with the explicit step on smooth problems") {
    auto prob = cole_hopf_problem();
    auto expl = solve_semilinear_fd(prob, 100, 200);
    PdeConfig cfg;
    cfg.implicit_driver = true;
    auto impl = solve_semilinear_fd(prob, 100, 200, cfg);
    CHECK(impl.max_driver_sweeps >= 1);
    for (double x : {-1.0, 0.0, 1.3})
        CHECK(std::abs(expl.value(0.0, x) - impl.value(0.0, x)) <= 5e-3);  // schemes differ at O(dt)
}

TEST_CASE("degenerate diffusion is rejected") {
    auto prob = heat_problem([](double x) { return x; });
    prob.diffusion = [](double, double) { return 0.0; };
    CHECK_THROWS_AS(solve_semilinear_fd(prob, 32, 64), InvalidConfig);
    CHECK_THROWS_AS(solve_semilinear_fd(heat_problem([](double x) { return x; }), 4, 64),
                    InvalidConfig);
}

TEST_CASE("feynman-kac: linear and quadratic heat probes") {
    auto prob = heat_problem([](double x) { return x; });
    auto sol = solve_semilinear_fd(prob, 64, 128);
    FeynmanKacConfig cfg;
    cfg.paths = 20000;
    cfg.steps = 25;
    cfg.seed = 313;
    auto probes = feynman_kac_crosscheck(prob, sol, {{0.0, 0.5}, {0.25, -1.0}}, cfg);
    for (const auto& p : probes)
        CHECK(std::abs(p.y0 - p.x0) <= 3.0 * p.y0_std_error + 1e-6);

    auto prob2 = heat_problem([](double x) { return x * x; });
    prob2.x_lo = -8.0;
    prob2.x_hi = 8.0;
    auto sol2 = solve_semilinear_fd(prob2, 64, 257);
    auto probes2 = feynman_kac_crosscheck(prob2, sol2, {{0.0, 1.0}}, cfg);
    for (const auto& p : probes2)
        CHECK(std::abs(p.y0 - (p.x0 * p.x0 + 1.0)) <= 3.0 * p.y0_std_error + 0.05);
}

TEST_CASE("feynman-kac: quadratic gradient driver agrees with the grid solution") {
    auto prob = cole_hopf_problem();
    auto sol = solve_semilinear_fd(prob, 200, 400);
    FeynmanKacConfig cfg;
    cfg.paths = 50000;
    cfg.steps = 50;
    cfg.seed = 99;
    auto probes = feynman_kac_crosscheck(prob, sol, {{0.0, 0.0}, {0.0, 1.0}, {0.5, -0.8}}, cfg);
    for (const auto& p : probes)
        CHECK(p.abs_error <= std::max(3.0 * p.y0_std_error, 5e-3));
}

TEST_CASE("probes near the boundary are rejected") {
    auto prob = heat_problem([](double x) { return x; });
    auto sol = solve_semilinear_fd(prob, 32, 64);
    CHECK_THROWS_AS(feynman_kac_crosscheck(prob, sol, {{0.0, 5.9}}), InvalidConfig);
    CHECK_THROWS_AS(feynman_kac_crosscheck(prob, sol, {{1.5, 0.0}}), InvalidConfig);
}
