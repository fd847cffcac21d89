#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qbsde/regularize.hpp"

using namespace qbsde;

namespace {

GeneratorSpec constant_driver(double c) {
    GeneratorSpec g;
    g.driver = [c](double, std::span<const double>, double, std::span<const double>) {
        return c;
    };
    return g;
}

GeneratorSpec ysquare_driver() {
    GeneratorSpec g;
    g.driver = [](double, std::span<const double>, double y, std::span<const double>) {
        return y * y;
    };
    return g;
}

GeneratorSpec zsquare_driver() {
    GeneratorSpec g;
    g.driver = [](double, std::span<const double>, double, std::span<const double> z) {
        return z[0] * z[0];
    };
    return g;
}

GeneratorSpec mixed_driver() {
    GeneratorSpec g;
    g.driver = [](double, std::span<const double>, double y, std::span<const double> z) {
        return z[0] * z[0] - y;
    };
    return g;
}

/// Brute-force grid minimization oracle over the same lattice.
double brute_force_envelope(const GeneratorSpec& base, bool positive_part, int slope,
                            const TruncBox& box, int pts, double y, double z) {
    const double hy = (box.y_hi - box.y_lo) / (pts - 1);
    const double hz = (box.z_hi - box.z_lo) / (pts - 1);
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < pts; ++i) {
        for (int j = 0; j < pts; ++j) {
            const double yy = box.y_lo + hy * i;
            const double zz[] = {box.z_lo + hz * j};
            const double f = base.evaluate(0.0, {}, yy, zz);
            const double part = positive_part ? std::max(f, 0.0) : std::max(-f, 0.0);
            best = std::min(best, part + slope * (std::abs(y - yy) + std::abs(z - zz[0])));
        }
    }
    return best;
}

}  // namespace

TEST_CASE("constant drivers are fixed points of the regularization") {
    auto reg = inf_convolution(constant_driver(3.0), 4, 7, TruncBox{}, 65);
    const double z[] = {0.5};
    for (double y : {-8.0, 0.0, 3.3})
        CHECK(reg.evaluate(0.1, y, z) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("quadratic-in-y driver is reproduced inside the cone-dominated box") {
    // On [-5, 5] with n = 10 the cone slope dominates the parabola slope.
    TruncBox box;
    box.y_lo = -5.0;
    box.y_hi = 5.0;
    auto reg = inf_convolution(ysquare_driver(), 10, 10, box, 129);
    const double z[] = {0.0};
    for (double y : {-4.0, -1.0, 0.0, 2.5}) {
        const double oracle = std::min(
            brute_force_envelope(ysquare_driver(), true, 10, box, 129, y, 0.0), y * y);
        CHECK(reg.evaluate(0.0, y, z) == doctest::Approx(oracle).epsilon(1e-12));
        CHECK(std::abs(reg.evaluate(0.0, y, z) - y * y) <= reg.error_bound());
    }
}

TEST_CASE("quadratic-in-z envelope matches the one-dimensional calculus value") {
    // min over z' of z'^2 + 2|3 - z'| = 5, attained at z' = 1.
    auto reg = inf_convolution(zsquare_driver(), 2, 2, TruncBox{}, 257);
    const double z[] = {3.0};
    CHECK(std::abs(reg.evaluate(0.0, 0.0, z) - 5.0) <= reg.error_bound());
    const double oracle = std::min(
        brute_force_envelope(zsquare_driver(), true, 2, TruncBox{}, 257, 0.0, 3.0), 9.0);
    CHECK(reg.evaluate(0.0, 0.0, z) == doctest::Approx(oracle).epsilon(1e-10));
}

TEST_CASE("ordering: increasing in n, decreasing in k, inside the cone bounds") {
    auto base = mixed_driver();
    auto r22 = inf_convolution(base, 2, 2, TruncBox{}, 129);
    auto r42 = inf_convolution(base, 4, 2, TruncBox{}, 129);
    auto r24 = inf_convolution(base, 2, 4, TruncBox{}, 129);
    for (double y : {-3.0, 0.0, 1.7}) {
        for (double zv : {-2.0, 0.4, 3.0}) {
            const double z[] = {zv};
            const double f = base.evaluate(0.0, {}, y, z);
            const double v22 = r22.evaluate(0.0, y, z);
            CHECK(r42.evaluate(0.0, y, z) >= v22 - 1e-12);
            CHECK(r24.evaluate(0.0, y, z) <= v22 + 1e-12);
            CHECK(v22 <= std::max(f, 0.0) + 1e-12);
            CHECK(v22 >= -std::max(-f, 0.0) - 1e-12);
        }
    }
}

TEST_CASE("envelopes are Lipschitz with the declared slope on sampled pairs") {
    auto reg = inf_convolution(mixed_driver(), 3, 2, TruncBox{}, 129);
    const double slope = 3.0;
    for (int k = 0; k < 64; ++k) {
        const double y1 = -6.0 + 12.0 * Philox4x32::uniform(5, {(unsigned)k, 0, 0, 0});
        const double y2 = -6.0 + 12.0 * Philox4x32::uniform(5, {(unsigned)k, 1, 0, 0});
        const double za[] = {-6.0 + 12.0 * Philox4x32::uniform(5, {(unsigned)k, 2, 0, 0})};
        const double zb[] = {-6.0 + 12.0 * Philox4x32::uniform(5, {(unsigned)k, 3, 0, 0})};
        const double diff = std::abs(reg.evaluate(0.0, y1, za) - reg.evaluate(0.0, y2, zb));
        CHECK(diff <= slope * (std::abs(y1 - y2) + std::abs(za[0] - zb[0])) + 1e-9);
    }
}

TEST_CASE("doubling n never decreases the envelope on samples") {
    auto r1 = inf_convolution(zsquare_driver(), 4, 2, TruncBox{}, 129);
    auto r2 = inf_convolution(zsquare_driver(), 8, 2, TruncBox{}, 129);
    for (double zv : {-4.0, -0.5, 2.0, 6.0}) {
        const double z[] = {zv};
        CHECK(r2.evaluate(0.0, 0.0, z) >= r1.evaluate(0.0, 0.0, z) - 1e-12);
    }
}

TEST_CASE("grid refinement moves values by less than the reported bound") {
    auto coarse = inf_convolution(zsquare_driver(), 4, 4, TruncBox{}, 129);
    auto fine = inf_convolution(zsquare_driver(), 4, 4, TruncBox{}, 257);
    for (double zv : {-3.3, 0.1, 1.9, 4.4}) {
        const double z[] = {zv};
        CHECK(std::abs(coarse.evaluate(0.0, 0.0, z) - fine.evaluate(0.0, 0.0, z)) <=
              coarse.error_bound());
    }
}

TEST_CASE("state truncation clamps and composes") {
    auto rho = truncate_state(2.0);
    CHECK(rho(0.0) == 0.0);
    CHECK(rho(3.0) == 2.0);
    CHECK(rho(-3.0) == -2.0);

    auto composed = rho.compose(ysquare_driver());
    const double z[] = {0.0};
    CHECK(composed.driver(0.0, {}, 10.0, z) == doctest::Approx(4.0));
    // Growth after truncation is bounded by the sup over the clamped range.
    for (double y : {-50.0, -1.0, 7.0})
        CHECK(composed.driver(0.0, {}, y, z) <= 4.0 + 1e-12);
}

TEST_CASE("alpha budget cuts the positive part off after sigma_n") {
    GeneratorSpec g = constant_driver(2.0);
    g.alpha = [](double) { return 4.0; };  // |alpha|_t = 4t; sigma_1 = 0.25
    auto reg = inf_convolution(g, 1, 1, TruncBox{}, 65);
    const double z[] = {0.0};
    CHECK(reg.evaluate(0.2, 0.0, z) == doctest::Approx(2.0));
    CHECK(reg.evaluate(0.3, 0.0, z) == doctest::Approx(0.0));
}

TEST_CASE("study: zero driver reduces to clipped-payoff expectations") {
    auto e = simulate_brownian(TimeGrid(1.0, 8), 1, 20000, 71);
    TerminalFn xi = [](const PathEnsemble& en, long m) { return en.brownian(en.grid.steps, m); };
    ConvergenceStudyConfig cfg;
    cfg.solver.basis.degree = 2;
    cfg.solver.clamp_continuation = false;  // mean-preservation identity needs raw fits
    auto res = regularized_convergence_study(constant_driver(0.0), xi, e, {1, 2}, {1, 2}, cfg);
    CHECK(res.monotone_in_n);
    CHECK(res.antitone_in_k);
    // Direct closed form: E[min(W_T^+, n) - min(W_T^-, k)].
    double ref = 0.0;
    for (long m = 0; m < e.num_paths; ++m) {
        const double v = e.brownian(8, m);
        ref += std::min(std::max(v, 0.0), 1.0) - std::min(std::max(-v, 0.0), 2.0);
    }
    ref /= static_cast<double>(e.num_paths);
    CHECK(res.at(0, 1) == doctest::Approx(ref).epsilon(1e-6));
}

TEST_CASE("study: quadratic driver diagonal approaches the exponential value") {
    auto e = simulate_brownian(TimeGrid(1.0, 20), 1, 20000, 72);
    TerminalFn xi = [](const PathEnsemble& en, long m) { return en.brownian(en.grid.steps, m); };
    GeneratorSpec g = zsquare_driver();
    ConvergenceStudyConfig cfg;
    auto res = regularized_convergence_study(g, xi, e, {2, 8}, {2, 8}, cfg);
    CHECK(res.monotone_in_n);
    CHECK(res.antitone_in_k);
    // The large-(n,k) diagonal must sit closer to the direct quadratic solve.
    const double d_small = std::abs(res.at(0, 0) - res.direct_y0);
    const double d_large = std::abs(res.at(1, 1) - res.direct_y0);
    CHECK(d_large <= d_small + res.tolerance);
    CHECK(res.gap_to_direct <= 0.2);
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS(inf_convolution(constant_driver(1.0), 2, 2, TruncBox{}, 16), InvalidConfig);
    CHECK_THROWS_AS(inf_convolution(constant_driver(1.0), 0, 2, TruncBox{}, 65), InvalidConfig);
    TruncBox bad;
    bad.dim_z = 3;
    CHECK_THROWS_AS(inf_convolution(constant_driver(1.0), 2, 2, bad, 65), InvalidConfig);
    auto e = simulate_brownian(TimeGrid(1.0, 2), 1, 512, 73);
    TerminalFn xi = [](const PathEnsemble&, long) { return 0.0; };
    CHECK_THROWS_AS(
        regularized_convergence_study(constant_driver(0.0), xi, e, {}, {1}),
        InvalidConfig);
}
