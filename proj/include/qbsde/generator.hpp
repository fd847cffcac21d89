#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "qbsde/class_i.hpp"
#include "qbsde/errors.hpp"
#include "qbsde/rng.hpp"

namespace qbsde {

/// Driver F(t, y, z) with optional Markovian state. `state` is empty for
/// drivers that do not read the forward process.
using DriverFn =
    std::function<double(double t, std::span<const double> state, double y,
                        std::span<const double> z)>;

struct SpotCheckReport {
    long samples = 0;
    long violations = 0;
    double worst_margin = 0.0;  // most positive excess over the declared bound
};

/// A driver together with its declared structure-condition parameters:
/// nonnegative cost process alpha(t), monotonicity slope beta, gradient
/// slope gamma, nondecreasing phi with phi(0) = 0, and the class-I quadratic
/// coefficient. Flags say which conditions the driver claims; claimed
/// conditions are spot-checked on random samples before solving.
struct GeneratorSpec {
    DriverFn driver;
    std::function<double(double)> alpha = [](double) { return 0.0; };
    double beta = 0.0;
    double gamma = 0.0;
    std::function<double(double)> phi = [](double) { return 0.0; };
    std::optional<ClassIFunction> quad_coeff;  // f in f(|y|)|z|^2, none = no quadratic term

    struct Flags {
        bool continuous = true;
        bool monotone_at_zero = false;  // sgn(y) F <= alpha + beta|y| + gamma|z| + f(|y|)|z|^2
        bool growth_bounded = false;    // |F| <= alpha + phi(|y|) + gamma|z| + f(|y|)|z|^2
        bool convex_in_z = false;
        bool lipschitz = false;         // |dF| <= beta|dy| + gamma|dz|
        bool split_monotone_lipschitz = false;  // F = F1 + F2 structure declared
    } flags;

    /// Cumulative cost integral of alpha over [0, t] (alpha is deterministic
    /// in this artifact; a constant alpha gives alpha * t).
    double alpha_budget(double t, double tol = 1e-10) const {
        return integrate_or_throw(alpha, 0.0, t, tol);
    }

    double quad_bound(double abs_y) const {
        if (!quad_coeff) return 0.0;
        return std::abs(quad_coeff->eval(abs_y));
    }

    double evaluate(double t, std::span<const double> state, double y,
                    std::span<const double> z) const {
        return driver(t, state, y, z);
    }
};

namespace detail {

inline double rand_in(std::uint64_t seed, long k, int slot, double lo, double hi) {
    const double u = Philox4x32::uniform(seed, {static_cast<std::uint32_t>(k), 0xA5A5A5A5u,
                                                static_cast<std::uint32_t>(slot), 7u});
    return lo + (hi - lo) * u;
}

}  // namespace detail

/// Growth spot-check on random (t, y, z):
/// |F(t,y,z)| <= alpha_t + phi(|y|) + gamma|z| + f(|y|)|z|^2.
inline SpotCheckReport check_growth(const GeneratorSpec& gen, double horizon, long samples = 512,
                                    std::uint64_t seed = 0x9E3779B97F4A7C15ull) {
    SpotCheckReport r;
    r.samples = samples;
    std::vector<double> z(1);
    for (long k = 0; k < samples; ++k) {
        const double t = detail::rand_in(seed, k, 0, 0.0, horizon);
        const double y = detail::rand_in(seed, k, 1, -5.0, 5.0);
        z[0] = detail::rand_in(seed, k, 2, -5.0, 5.0);
        const double bound = gen.alpha(t) + gen.phi(std::abs(y)) + gen.gamma * std::abs(z[0]) +
                             gen.quad_bound(std::abs(y)) * z[0] * z[0];
        const double excess = std::abs(gen.evaluate(t, {}, y, z)) - bound;
        if (excess > 1e-9) {
            ++r.violations;
            r.worst_margin = std::max(r.worst_margin, excess);
        }
    }
    return r;
}

/// Monotonicity-at-zero spot-check:
/// sgn(y) F(t,y,z) <= alpha_t + beta|y| + gamma|z| + f(|y|)|z|^2.
inline SpotCheckReport check_monotone_at_zero(const GeneratorSpec& gen, double horizon,
                                              long samples = 512,
                                              std::uint64_t seed = 0xC2B2AE3D27D4EB4Full) {
    SpotCheckReport r;
    r.samples = samples;
    std::vector<double> z(1);
    for (long k = 0; k < samples; ++k) {
        const double t = detail::rand_in(seed, k, 0, 0.0, horizon);
        const double y = detail::rand_in(seed, k, 1, -5.0, 5.0);
        z[0] = detail::rand_in(seed, k, 2, -5.0, 5.0);
        const double bound = gen.alpha(t) + gen.beta * std::abs(y) +
                             gen.gamma * std::abs(z[0]) +
                             gen.quad_bound(std::abs(y)) * z[0] * z[0];
        const double sgn = y > 0.0 ? 1.0 : (y < 0.0 ? -1.0 : 0.0);
        const double excess = sgn * gen.evaluate(t, {}, y, z) - bound;
        if (excess > 1e-9) {
            ++r.violations;
            r.worst_margin = std::max(r.worst_margin, excess);
        }
    }
    return r;
}

/// Lipschitz spot-check on random pairs:
/// |F(t,y,z) - F(t,y',z')| <= beta|y-y'| + gamma|z-z'|.
inline SpotCheckReport check_lipschitz(const GeneratorSpec& gen, double horizon,
                                       long samples = 512,
                                       std::uint64_t seed = 0x165667B19E3779F9ull) {
    SpotCheckReport r;
    r.samples = samples;
    std::vector<double> z1(1), z2(1);
    for (long k = 0; k < samples; ++k) {
        const double t = detail::rand_in(seed, k, 0, 0.0, horizon);
        const double y1 = detail::rand_in(seed, k, 1, -5.0, 5.0);
        const double y2 = detail::rand_in(seed, k, 2, -5.0, 5.0);
        z1[0] = detail::rand_in(seed, k, 3, -5.0, 5.0);
        z2[0] = detail::rand_in(seed, k, 4, -5.0, 5.0);
        const double lhs = std::abs(gen.evaluate(t, {}, y1, z1) - gen.evaluate(t, {}, y2, z2));
        const double bound =
            gen.beta * std::abs(y1 - y2) + gen.gamma * std::abs(z1[0] - z2[0]);
        if (lhs - bound > 1e-9) {
            ++r.violations;
            r.worst_margin = std::max(r.worst_margin, lhs - bound);
        }
    }
    return r;
}

/// Run every check the generator's flags claim; throws on violations.
inline void verify_declared_conditions(const GeneratorSpec& gen, double horizon) {
    if (gen.flags.growth_bounded) {
        const auto r = check_growth(gen, horizon);
        if (r.violations > 0)
            throw InvalidConfig("generator growth spot-check failed (worst margin " +
                                std::to_string(r.worst_margin) + ")");
    }
    if (gen.flags.monotone_at_zero) {
        const auto r = check_monotone_at_zero(gen, horizon);
        if (r.violations > 0)
            throw InvalidConfig("generator monotonicity spot-check failed (worst margin " +
                                std::to_string(r.worst_margin) + ")");
    }
    if (gen.flags.lipschitz) {
        const auto r = check_lipschitz(gen, horizon);
        if (r.violations > 0)
            throw InvalidConfig("generator Lipschitz spot-check failed (worst margin " +
                                std::to_string(r.worst_margin) + ")");
    }
}

}  // namespace qbsde
