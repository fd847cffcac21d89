#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qbsde/estimates.hpp"
#include "qbsde/exact_solvers.hpp"
#include "qbsde/lsmc.hpp"

using namespace qbsde;

namespace {

TerminalFn terminal_brownian() {
    return [](const PathEnsemble& e, long m) { return e.brownian(e.grid.steps, m); };
}

GeneratorSpec zero_generator() {
    GeneratorSpec g;
    g.driver = [](double, std::span<const double>, double, std::span<const double>) {
        return 0.0;
    };
    return g;
}

std::function<double(double)> zero_alpha() {
    return [](double) { return 0.0; };
}

}  // namespace

TEST_CASE("zero solution has zero norms") {
    auto e = simulate_brownian(TimeGrid(1.0, 10), 1, 2000, 81);
    TerminalFn xi = [](const PathEnsemble&, long) { return 0.0; };
    auto sol = solve_bsde_backward(zero_generator(), xi, e);
    auto rep = empirical_lp_norms(sol, 2.0);
    CHECK(rep.lhs_sup_norm == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rep.lhs_z_norm <= 1e-10);
}

TEST_CASE("martingale norms: quadratic variation near T, Doob bracket for the sup") {
    auto e = simulate_brownian(TimeGrid(1.0, 25), 1, 30000, 82);
    auto sol = solve_bsde_backward(zero_generator(), terminal_brownian(), e);
    auto rep = empirical_lp_norms(sol, 2.0);
    // Z == 1: E[int |Z|^2] = T.
    CHECK(rep.lhs_z_norm == doctest::Approx(1.0).epsilon(0.05));
    // E[(Y*)^2] for Brownian motion lies in [T, 4T] (Doob's L2 inequality).
    CHECK(rep.lhs_sup_norm >= 1.0 - 0.05);
    CHECK(rep.lhs_sup_norm <= 4.0 + 0.05);
}

TEST_CASE("a priori ratio is finite and stable under path doubling") {
    double ratios[2];
    long Ms[2] = {20000, 40000};
    for (int r = 0; r < 2; ++r) {
        auto e = simulate_brownian(TimeGrid(1.0, 20), 1, Ms[r], 83);
        auto sol = solve_bsde_backward(zero_generator(), terminal_brownian(), e);
        std::vector<double> xis(static_cast<std::size_t>(e.num_paths));
        for (long m = 0; m < e.num_paths; ++m)
            xis[static_cast<std::size_t>(m)] = e.brownian(20, m);
        auto rep = apriori_ratio_check(sol, xis, zero_alpha(), 2.0);
        CHECK(std::isfinite(rep.ratio));
        CHECK(rep.ratio > 0.0);
        ratios[r] = rep.ratio;
    }
    CHECK(std::abs(ratios[1] - ratios[0]) <= 0.2 * ratios[0]);
}

TEST_CASE("degenerate data with nonzero solution is flagged") {
    auto e = simulate_brownian(TimeGrid(1.0, 4), 1, 1000, 84);
    TerminalFn one = [](const PathEnsemble&, long) { return 1.0; };
    auto sol = solve_bsde_backward(zero_generator(), one, e);
    std::vector<double> zeros(static_cast<std::size_t>(e.num_paths), 0.0);
    CHECK_THROWS_AS(apriori_ratio_check(sol, zeros, zero_alpha(), 2.0), InvalidConfig);
}

TEST_CASE("exponential bound: deterministic terminal gives equality, no violations") {
    auto e = simulate_brownian(TimeGrid(1.0, 8), 1, 4000, 85);
    TerminalFn xi = [](const PathEnsemble&, long) { return 0.7; };
    auto sol = solve_exp_quadratic(xi, e);
    std::vector<double> xis(static_cast<std::size_t>(e.num_paths), 0.7);
    auto rep = exp_bound_check(sol, e, xis, zero_alpha(), 0.0, 2.0);
    CHECK(!rep.overflowed);
    CHECK(rep.violations == 0);
}

TEST_CASE("exponential bound at the initial node for the Brownian terminal") {
    // Y_0 = T must satisfy T <= ln E[e^{2|W_T|}]/2; at the initial node the
    // conditional expectation is a plain mean, so no regression enters.
    auto e = simulate_brownian(TimeGrid(1.0, 20), 1, 20000, 86);
    auto sol = solve_exp_quadratic(terminal_brownian(), e);
    double mean = 0.0;
    for (long m = 0; m < e.num_paths; ++m)
        mean += std::exp(2.0 * std::abs(e.brownian(20, m)));
    mean /= static_cast<double>(e.num_paths);
    CHECK(sol.y0() <= 0.5 * std::log(mean));
}

TEST_CASE("exponential bound holds node-by-node for a smooth nonnegative terminal") {
    // xi = 1 + cos(W_T) >= 0 makes the bound an equality in the exact
    // solution; the check must still report zero violations at its
    // statistical tolerance.
    auto e = simulate_brownian(TimeGrid(1.0, 20), 1, 20000, 86);
    TerminalFn xi = [](const PathEnsemble& en, long m) {
        return 1.0 + std::cos(en.brownian(en.grid.steps, m));
    };
    auto sol = solve_exp_quadratic(xi, e);
    std::vector<double> xis(static_cast<std::size_t>(e.num_paths));
    for (long m = 0; m < e.num_paths; ++m) xis[static_cast<std::size_t>(m)] = xi(e, m);
    // Same basis as the solver, for comparability of the two estimators.
    auto rep = exp_bound_check(sol, e, xis, zero_alpha(), 0.0, 2.0, ExactSolverConfig{}.basis);
    CHECK(!rep.overflowed);
    CHECK(rep.violations == 0);
    CHECK(rep.checked == 20 * e.num_paths);
}

TEST_CASE("exponential-moment overflow is reported with its quantile, not thrown") {
    auto e = simulate_brownian(TimeGrid(1.0, 4), 1, 2000, 87);
    TerminalFn xi = [](const PathEnsemble& en, long m) {
        const double w = en.brownian(en.grid.steps, m);
        return 200.0 * w * w;
    };
    auto sol = solve_bsde_backward(zero_generator(), xi, e);
    std::vector<double> xis(static_cast<std::size_t>(e.num_paths));
    for (long m = 0; m < e.num_paths; ++m) xis[static_cast<std::size_t>(m)] = xi(e, m);
    auto rep = exp_bound_check(sol, e, xis, zero_alpha(), 0.0, 2.0);
    CHECK(rep.overflowed);
    CHECK(rep.overflow_quantile < 1.0);
    CHECK(rep.overflow_quantile > 0.0);
}

TEST_CASE("comparison: identical solutions are fully ordered") {
    auto e = simulate_brownian(TimeGrid(1.0, 10), 1, 5000, 88);
    auto sol = solve_bsde_backward(zero_generator(), terminal_brownian(), e);
    auto rep = comparison_check(sol, sol);
    CHECK(rep.fraction == 1.0);
    CHECK(rep.pass);
}

TEST_CASE("comparison: additive shift is exactly preserved") {
    auto e = simulate_brownian(TimeGrid(1.0, 10), 1, 10000, 89);
    TerminalFn hi = [](const PathEnsemble& en, long m) {
        return en.brownian(en.grid.steps, m) + 1.0;
    };
    auto lo_sol = solve_bsde_backward(zero_generator(), terminal_brownian(), e);
    auto hi_sol = solve_bsde_backward(zero_generator(), hi, e);
    auto rep = comparison_check(lo_sol, hi_sol);
    CHECK(rep.fraction == 1.0);
    // And the shift equals one everywhere.
    for (long i = 0; i <= 10; i += 5)
        for (long m = 0; m < e.num_paths; m += 503)
            CHECK(hi_sol.y_at(i, m) - lo_sol.y_at(i, m) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("comparison: ordered coefficient functions in the purely quadratic class") {
    auto e = simulate_brownian(TimeGrid(1.0, 10), 1, 20000, 90);
    auto f = classi::zero();
    auto g = classi::constant_indicator(0.5, 0.0, 1.0);
    auto tf = build_u_transform(f, {-4.0, 4.0}, 513, 1e-10);
    auto tg = build_u_transform(g, {-4.0, 4.0}, 513, 1e-10);
    TerminalFn xi = [](const PathEnsemble& en, long m) {
        return std::min(std::abs(en.brownian(en.grid.steps, m)), 2.0);
    };
    auto lo = solve_purely_quadratic(f, tf, xi, e);
    auto hi = solve_purely_quadratic(g, tg, xi, e);
    auto rep = comparison_check(lo, hi);
    CHECK(rep.pass);
}

TEST_CASE("comparison rejects mismatched ensembles") {
    auto e1 = simulate_brownian(TimeGrid(1.0, 10), 1, 1000, 91);
    auto e2 = simulate_brownian(TimeGrid(1.0, 10), 1, 1000, 92);
    auto a = solve_bsde_backward(zero_generator(), terminal_brownian(), e1);
    auto b = solve_bsde_backward(zero_generator(), terminal_brownian(), e2);
    CHECK_THROWS_AS(comparison_check(a, b), IncompatibleSolutions);
}
