#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "qbsde/class_i.hpp"
#include "qbsde/quadrature.hpp"
#include "qbsde/transform.hpp"

using namespace qbsde;

namespace {
constexpr double kPi = 3.14159265358979323846;

ClassIFunction sin_half_period_piece() { return classi::sin_indicator(-kPi, kPi / 2.0); }
}  // namespace

TEST_CASE("adaptive simpson matches closed forms") {
    auto r = integrate([](double x) { return x * x; }, 0.0, 3.0, 1e-12);
    CHECK(r.value == doctest::Approx(9.0).epsilon(1e-12));
    CHECK(r.converged);

    // Discontinuous integrand with a declared breakpoint.
    const double bp[] = {1.0};
    auto s = integrate([](double x) { return x < 1.0 ? 1.0 : 2.0; }, 0.0, 2.0, 1e-12, bp);
    CHECK(s.value == doctest::Approx(3.0).epsilon(1e-12));

    // Signed orientation.
    auto t = integrate([](double x) { return std::cos(x); }, 1.0, -1.0, 1e-12);
    CHECK(t.value == doctest::Approx(-2.0 * std::sin(1.0)).epsilon(1e-12));
}

TEST_CASE("u-transform of f == 0 is the identity") {
    auto table = build_u_transform(classi::zero(), {-2.0, 2.0}, 257, 1e-10);
    CHECK(table.m_factor == doctest::Approx(1.0));
    for (std::size_t i = 0; i < table.grid.size(); ++i) {
        CHECK(table.values[i] == doctest::Approx(table.grid[i]).epsilon(1e-12));
        CHECK(table.derivs[i] == doctest::Approx(1.0).epsilon(1e-13));
    }
    CHECK(invert_transform(table, 0.7) == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("u-transform of the half indicator matches the closed form") {
    // f = c * 1_[0,1], c = 0.5:
    //   u(x) = (e^{2cx}-1)/(2c) on [0,1], and u(1) + e^{2c}(x-1) beyond.
    const double c = 0.5;
    auto f = classi::constant_indicator(c, 0.0, 1.0);
    auto table = build_u_transform(f, {-2.0, 3.0}, 1025, 1e-10);
    CHECK(table.m_factor == doctest::Approx(std::exp(2.0 * c)).epsilon(1e-14));

    auto exact = [c](double x) {
        if (x <= 0.0) return x;
        if (x <= 1.0) return (std::exp(2.0 * c * x) - 1.0) / (2.0 * c);
        return (std::exp(2.0 * c) - 1.0) / (2.0 * c) + std::exp(2.0 * c) * (x - 1.0);
    };
    for (std::size_t i = 0; i < table.grid.size(); ++i) {
        CHECK(table.values[i] == doctest::Approx(exact(table.grid[i])).epsilon(2e-12));
    }

    // u(1) = e - 1 for c = 0.5; inversion recovers x = 1.
    CHECK(invert_transform(table, std::exp(1.0) - 1.0) == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("u-transform of the sin piece agrees with a brute-force oracle") {
    auto f = sin_half_period_piece();
    auto table = build_u_transform(f, {-2.0, 2.0}, 129, 1e-10);

    // Oracle: 10^6-panel composite Simpson, entirely independent of the
    // adaptive path (inner antiderivative of sin is exact in both).
    auto inner = [](double y) {
        const double lo = std::max(-kPi, std::min(0.0, y));
        const double hi = std::min(kPi / 2.0, std::max(0.0, y));
        if (lo >= hi) return 0.0;
        const double v = std::cos(lo) - std::cos(hi);
        return y >= 0.0 ? v : -v;
    };
    auto integrand = [inner](double y) { return std::exp(2.0 * inner(y)); };
    for (std::size_t i = 0; i < table.grid.size(); i += 16) {
        const double x = table.grid[i];
        const double oracle = x == 0.0 ? 0.0 : composite_simpson(integrand, 0.0, x, 1000000);
        CHECK(table.values[i] == doctest::Approx(oracle).epsilon(1e-9));
    }
}

TEST_CASE("u-table envelope and monotonicity invariants") {
    for (const auto& f : {classi::constant_indicator(0.5, 0.0, 1.0), sin_half_period_piece()}) {
        auto table = build_u_transform(f, {-3.0, 3.0}, 513, 1e-10);
        const double m = table.m_factor;
        for (std::size_t i = 0; i + 1 < table.grid.size(); ++i)
            CHECK(table.values[i + 1] > table.values[i]);
        for (std::size_t i = 0; i < table.grid.size(); ++i) {
            const double x = table.grid[i];
            if (x == 0.0) {
                CHECK(table.values[i] == 0.0);
                continue;
            }
            const double ratio = std::abs(table.values[i]) / std::abs(x);
            CHECK(ratio <= m * (1.0 + 1e-10));
            CHECK(ratio >= (1.0 - 1e-10) / m);
        }
    }
}

TEST_CASE("invert composed with eval is the identity") {
    auto f = classi::constant_indicator(0.5, 0.0, 1.0);
    auto table = build_u_transform(f, {-2.0, 2.0}, 1025, 1e-10);
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    for (int k = 0; k < 1000; ++k) {
        const double x = unif(gen);
        const double y = table.eval(x);
        CHECK(invert_transform(table, y) == doctest::Approx(x).epsilon(5e-8));
    }
}

TEST_CASE("invert rejects values outside the table range") {
    auto table = build_u_transform(classi::zero(), {-1.0, 1.0}, 65, 1e-10);
    CHECK_THROWS_AS(invert_transform(table, 5.0), OutOfRange);
    auto v = build_v_transform(classi::zero(), {-1.0, 1.0}, 65, 1e-10);
    CHECK_THROWS_AS(invert_transform(v, 0.1), InvalidConfig);
}

TEST_CASE("invalid transform domains are rejected") {
    CHECK_THROWS_AS(build_u_transform(classi::zero(), {1.0, 2.0}, 65, 1e-10), InvalidConfig);
    CHECK_THROWS_AS(build_u_transform(classi::zero(), {-1.0, 1.0}, 2, 1e-10), InvalidConfig);
}

TEST_CASE("v-transform of f == 0 is x^2/2") {
    auto table = build_v_transform(classi::zero(), {-2.0, 2.0}, 257, 1e-10);
    for (std::size_t i = 0; i < table.grid.size(); ++i) {
        const double x = table.grid[i];
        CHECK(table.values[i] == doctest::Approx(0.5 * x * x).epsilon(1e-11));
        CHECK(table.derivs[i] == doctest::Approx(x).epsilon(1e-11));
    }
    CHECK(table.max_ode_residual <= 10.0 * table.tol);
}

TEST_CASE("v-transform value matches an independent double-quadrature oracle") {
    const double c = 0.5;
    auto f = classi::constant_indicator(c, 0.0, 1.0);
    auto table = build_v_transform(f, {-2.0, 2.0}, 513, 1e-10);

    // Oracle: v(0.5) by nested composite Simpson with exact inner exponent.
    auto phi = [c](double y) { return c * std::clamp(y, 0.0, 1.0); };
    auto oracle_at = [&](double x) {
        return composite_simpson(
            [&](double y) {
                const double a =
                    composite_simpson([&](double w) { return std::exp(-2.0 * phi(w)); }, 0.0, y,
                                      4000);
                return a * std::exp(2.0 * phi(y));
            },
            0.0, std::abs(x), 4000);
    };
    const double x = 0.5;
    const std::size_t idx = static_cast<std::size_t>(
        std::lower_bound(table.grid.begin(), table.grid.end(), x) - table.grid.begin());
    CHECK(table.grid[idx] == doctest::Approx(x).epsilon(1e-12));
    CHECK(table.values[idx] == doctest::Approx(oracle_at(x)).epsilon(1e-9));
}

TEST_CASE("v-transform is even and respects its envelope") {
    auto f = sin_half_period_piece();
    auto table = build_v_transform(f, {-2.0, 2.0}, 513, 1e-10);
    const double m2 = table.m_factor * table.m_factor;
    for (std::size_t i = 0; i < table.grid.size(); ++i) {
        const double x = table.grid[i];
        // Evenness by construction: v(-x) computed from the same radius.
        const auto j = static_cast<std::size_t>(
            std::min_element(table.grid.begin(), table.grid.end(),
                             [x](double a, double b) {
                                 return std::abs(a + x) < std::abs(b + x);
                             }) -
            table.grid.begin());
        if (std::abs(table.grid[j] + x) < 1e-12) {
            CHECK(table.values[i] == doctest::Approx(table.values[j]).epsilon(1e-12));
        }
        CHECK(table.values[i] >= x * x / (2.0 * m2) - 1e-9);
        CHECK(table.values[i] <= m2 * x * x / 2.0 + 1e-9);
    }
    CHECK(table.max_ode_residual <= 10.0 * table.tol);
}

TEST_CASE("class-I metadata sanity") {
    auto f = sin_half_period_piece();
    // integral of |sin| over [-pi, pi/2] = 2 + 1 = 3.
    CHECK(f.total_abs_integral == doctest::Approx(3.0).epsilon(1e-10));
    f.validate();

    auto g = classi::sum(classi::constant_indicator(1.0, 0.0, 1.0),
                         classi::constant_indicator(-1.0, 2.0, 3.0));
    CHECK(g.total_abs_integral == doctest::Approx(2.0));
    CHECK(g.eval(0.5) == doctest::Approx(1.0));
    CHECK(g.eval(2.5) == doctest::Approx(-1.0));
    CHECK((*g.antiderivative)(3.0) == doctest::Approx(0.0));
}
