#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "qbsde/class_i.hpp"
#include "qbsde/regression.hpp"
#include "qbsde/solution.hpp"
#include "qbsde/transform.hpp"

namespace qbsde {

struct ExactSolverConfig {
    BasisSpec basis{4};
    double ridge = 0.0;
    /// Clamp fitted conditional expectations to the sample range of their
    /// targets. On here (unlike the raw regression default): transformed
    /// targets are positive or range-bound and tail extrapolation must not
    /// escape the invertible range.
    bool clamp_predictions = true;
    std::size_t table_grid = 2049;
    double table_tol = 1e-10;
};

namespace detail {

inline double sample_std_error(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size() > 1 ? v.size() - 1 : 1);
    return std::sqrt(var / static_cast<double>(v.size()));
}

}  // namespace detail

/// Solve the purely quadratic equation with driver f(y)|z|^2 through the
/// increasing transform: the transformed value process is the martingale
/// E[u(xi) | F_t], estimated at each grid node, and the pair is mapped back
/// as (u^{-1}(level), z_tilde / u'(u^{-1}(level))). The terminal layer is
/// overwritten with xi itself.
///
/// The level is estimated through the tower chain with a control variate:
/// with m_i the fitted conditional mean of Y_{i+1} on the original scale,
///     E[u(Y_{i+1}) | F_i] = u(m_i) + E[u(Y_{i+1}) - u(m_i) | F_i],
/// exactly, and the second regression sees only the small centered
/// difference. Fitting u-scale targets directly would hand the unweighted
/// objective to wherever u' is largest (the envelope factor can reach e^6
/// for the sin coefficient). The Z field is fitted on the ratio scale
/// (level increment, dW-weighted, divided by the F_i-measurable u' before
/// the fit).
///
/// The table domain is auto-widened so that the whole xi sample (with an
/// envelope-factor margin) is covered before solving; a level escaping the
/// invertible range (possible with clamping disabled) raises OutOfRange.
inline BsdeSolution solve_purely_quadratic(const ClassIFunction& f, const TransformTable& u_table,
                                           const TerminalFn& xi_fn, const PathEnsemble& ensemble,
                                           const ExactSolverConfig& cfg = {}) {
    auto xi = sample_terminal(xi_fn, ensemble);
    const auto [lo_it, hi_it] = std::minmax_element(xi.begin(), xi.end());

    // Widen to an envelope-safe symmetric domain when the sample escapes the
    // provided table.
    const TransformTable* table = &u_table;
    TransformTable widened;
    const double reach = u_table.m_factor * std::max({std::abs(*lo_it), std::abs(*hi_it), 1e-6});
    if (*lo_it < u_table.domain_lo() || *hi_it > u_table.domain_hi()) {
        widened = build_u_transform(f, {-1.05 * reach, 1.05 * reach}, cfg.table_grid,
                                    cfg.table_tol);
        table = &widened;
    }

    std::vector<double> transformed(xi.size());
    for (std::size_t m = 0; m < xi.size(); ++m) transformed[m] = table->eval(xi[m]);

    BsdeSolution sol;
    sol.allocate(ensemble);
    sol.method = "purely-quadratic-transform";
    const long N = ensemble.grid.steps;
    const long M = ensemble.num_paths;
    const int d = ensemble.dim_w;
    const double dt = ensemble.grid.dt();
    for (long m = 0; m < M; ++m) sol.y_at(N, m) = xi[static_cast<std::size_t>(m)];

    const double domain_lo = table->domain_lo();
    const double domain_hi = table->domain_hi();
    std::vector<double> next_y(xi);                       // Y_{i+1} per path
    std::vector<double> next_level(transformed);          // u(Y_{i+1}) per path
    std::vector<double> level(static_cast<std::size_t>(M));
    std::vector<double> diff(static_cast<std::size_t>(M));
    std::vector<double> ztarget(static_cast<std::size_t>(M));
    for (long i = N - 1; i >= 0; --i) {
        int dim = 0;
        auto features = node_features(ensemble, i, dim);
        auto fit_m = fit_condexp(features, M, dim, next_y, cfg.basis, cfg.ridge,
                                 cfg.clamp_predictions);
        StepDiagnostics diag;
        diag.step = i;
        diag.regression_rms_y = fit_m.residual_rms;
        diag.condition_y = fit_m.condition_estimate;
        for (long m = 0; m < M; ++m) {
            std::span<const double> row{&features[static_cast<std::size_t>(m) * dim],
                                        static_cast<std::size_t>(dim)};
            const double anchor = std::clamp(fit_m.predict(row), domain_lo, domain_hi);
            level[static_cast<std::size_t>(m)] = table->eval(anchor);
            diff[static_cast<std::size_t>(m)] =
                next_level[static_cast<std::size_t>(m)] - level[static_cast<std::size_t>(m)];
        }
        auto fit_c = fit_condexp(features, M, dim, diff, cfg.basis, cfg.ridge,
                                 cfg.clamp_predictions);
        for (long m = 0; m < M; ++m) {
            std::span<const double> row{&features[static_cast<std::size_t>(m) * dim],
                                        static_cast<std::size_t>(dim)};
            level[static_cast<std::size_t>(m)] += fit_c.predict(row);
            const double v = level[static_cast<std::size_t>(m)];
            if (v < table->range_lo() || v > table->range_hi())
                throw OutOfRange(
                    "transform-range-exceeded: widen the table domain or enable clamping",
                    table->range_lo(), table->range_hi());
            sol.y_at(i, m) = invert_transform(*table, v);
        }
        for (int c = 0; c < d; ++c) {
            for (long m = 0; m < M; ++m) {
                const double incr = next_level[static_cast<std::size_t>(m)] -
                                    level[static_cast<std::size_t>(m)];
                const double slope = table->eval_deriv(sol.y_at(i, m));
                ztarget[static_cast<std::size_t>(m)] =
                    incr * ensemble.increment(i, m, c) / (dt * slope);
            }
            auto fit_z = fit_condexp(features, M, dim, ztarget, cfg.basis, cfg.ridge, false);
            diag.regression_rms_z = fit_z.residual_rms;
            diag.condition_z = fit_z.condition_estimate;
            for (long m = 0; m < M; ++m) {
                std::span<const double> row{&features[static_cast<std::size_t>(m) * dim],
                                            static_cast<std::size_t>(dim)};
                sol.z_at(i, m, c) = fit_z.predict(row);
            }
        }
        sol.diagnostics.push_back(diag);
        for (long m = 0; m < M; ++m) {
            next_level[static_cast<std::size_t>(m)] = level[static_cast<std::size_t>(m)];
            next_y[static_cast<std::size_t>(m)] = sol.y_at(i, m);
        }
    }
    std::reverse(sol.diagnostics.begin(), sol.diagnostics.end());

    // Delta-method standard error through the inverse transform at Y_0.
    sol.y0_std_error = detail::sample_std_error(transformed) / table->eval_deriv(sol.y0());
    if (!sol.all_finite()) throw NumericalBlowup("blowup: non-finite solution field", 0);
    return sol;
}

/// Solve the driver F(y, z) = |z|^2 by the exponential transform: the level
/// process is E[exp(2 xi) | F_t] and (Y, Z) = (ln(level)/2, z_tilde/(2 level)).
/// Requires a finite sample mean of exp(2 xi) — the empirical counterpart of
/// the necessary-and-sufficient integrability condition.
///
/// The level is estimated through the tower chain in multiplicative form:
/// with m_i the fitted conditional mean of Y_{i+1} and r its residual,
///     E[e^{2 Y_{i+1}} | F_i] = e^{2 m_i} * E[e^{2r} | F_i],
/// exactly, and both regression targets (Y-scale values and the bounded
/// convexity correction e^{2r}) are tame. Regressing e^{2 xi} directly would
/// let a handful of extreme-tail paths dominate the unweighted objective and
/// wreck the level's relative accuracy. Likewise Z is fitted in ratio form:
///     Z_i = E[(e^{2(Y_{i+1} - Y_i)} - 1) dW_i | F_i] / (2 dt),
/// which equals z_tilde / (2 level) because the fitted Y_i is
/// F_i-measurable.
inline BsdeSolution solve_exp_quadratic(const TerminalFn& xi_fn, const PathEnsemble& ensemble,
                                        const ExactSolverConfig& cfg = {}) {
    auto xi = sample_terminal(xi_fn, ensemble);
    {
        double mean = 0.0;
        for (double v : xi) {
            const double h = std::exp(2.0 * v);
            if (!std::isfinite(h))
                throw InvalidConfig("invalid-payoff: exp(2 xi) overflows on the sample");
            mean += h;
        }
        if (!std::isfinite(mean))
            throw InvalidConfig("invalid-payoff: exp(2 xi) has no finite sample mean");
    }

    BsdeSolution sol;
    sol.allocate(ensemble);
    sol.method = "exp-transform";
    const long N = ensemble.grid.steps;
    const long M = ensemble.num_paths;
    const int d = ensemble.dim_w;
    const double dt = ensemble.grid.dt();
    for (long m = 0; m < M; ++m) sol.y_at(N, m) = xi[static_cast<std::size_t>(m)];

    // The true solution lies in [min xi, max xi] (Jensen below, terminal
    // bound above); escaping that hull by a wide margin means the tail
    // regressions have started to feed on themselves.
    const auto [xi_lo, xi_hi] = std::minmax_element(xi.begin(), xi.end());
    const double y_floor = *xi_lo - 2.0;
    const double y_cap = *xi_hi + 2.0;

    std::vector<double> next(xi);       // Y_{i+1} per path
    std::vector<double> gtarget(static_cast<std::size_t>(M));
    std::vector<double> ztarget(static_cast<std::size_t>(M));
    for (long i = N - 1; i >= 0; --i) {
        int dim = 0;
        auto features = node_features(ensemble, i, dim);
        auto fit_m = fit_condexp(features, M, dim, next, cfg.basis, cfg.ridge,
                                 cfg.clamp_predictions);
        StepDiagnostics diag;
        diag.step = i;
        diag.regression_rms_y = fit_m.residual_rms;
        diag.condition_y = fit_m.condition_estimate;

        for (long m = 0; m < M; ++m) {
            std::span<const double> row{&features[static_cast<std::size_t>(m) * dim],
                                        static_cast<std::size_t>(dim)};
            const double cond_mean = fit_m.predict(row);
            gtarget[static_cast<std::size_t>(m)] =
                std::exp(2.0 * (next[static_cast<std::size_t>(m)] - cond_mean));
            sol.y_at(i, m) = cond_mean;  // convexity correction added below
        }
        auto fit_c = fit_condexp(features, M, dim, gtarget, cfg.basis, cfg.ridge,
                                 cfg.clamp_predictions);
        for (long m = 0; m < M; ++m) {
            std::span<const double> row{&features[static_cast<std::size_t>(m) * dim],
                                        static_cast<std::size_t>(dim)};
            const double correction = fit_c.predict(row);
            if (!(correction > 0.0))
                throw PositivityViolation(
                    "positivity-violation: fitted E[exp(2 xi)|F_t] is nonpositive; "
                    "use an exp-augmented basis or prediction clamping");
            sol.y_at(i, m) += 0.5 * std::log(correction);
        }
        for (int c = 0; c < d; ++c) {
            for (long m = 0; m < M; ++m) {
                const double growth =
                    std::exp(2.0 * (next[static_cast<std::size_t>(m)] - sol.y_at(i, m)));
                ztarget[static_cast<std::size_t>(m)] =
                    (growth - 1.0) * ensemble.increment(i, m, c) / (2.0 * dt);
            }
            // Two passes: the dominant noise term of the ratio target is
            // Z (dW^2 - dt)/dt, whose conditional mean vanishes for any
            // F_i-measurable factor, so a first-pass fit of Z makes an exact
            // control variate for the second.
            auto fit_z0 = fit_condexp(features, M, dim, ztarget, cfg.basis, cfg.ridge, false);
            for (long m = 0; m < M; ++m) {
                std::span<const double> row{&features[static_cast<std::size_t>(m) * dim],
                                            static_cast<std::size_t>(dim)};
                const double dw = ensemble.increment(i, m, c);
                ztarget[static_cast<std::size_t>(m)] -=
                    fit_z0.predict(row) * (dw * dw - dt) / dt;
            }
            auto fit_z = fit_condexp(features, M, dim, ztarget, cfg.basis, cfg.ridge, false);
            diag.regression_rms_z = fit_z.residual_rms;
            diag.condition_z = fit_z.condition_estimate;
            for (long m = 0; m < M; ++m) {
                std::span<const double> row{&features[static_cast<std::size_t>(m) * dim],
                                            static_cast<std::size_t>(dim)};
                sol.z_at(i, m, c) = fit_z.predict(row);
            }
        }
        sol.diagnostics.push_back(diag);
        for (long m = 0; m < M; ++m) {
            const double v = sol.y_at(i, m);
            if (!std::isfinite(v) || v < y_floor || v > y_cap)
                throw NumericalBlowup(
                    "blowup: exp-transform level escaped the terminal hull "
                    "(heavy-tailed terminal value for this basis)",
                    i);
            next[static_cast<std::size_t>(m)] = v;
        }
    }
    std::reverse(sol.diagnostics.begin(), sol.diagnostics.end());

    // Delta-method standard error of Y_0 = ln E[exp(2 xi)]/2 from the raw
    // transformed draws (centered exponent for numerical safety). The fitted
    // field is smoothed, so its cross-path dispersion would understate the
    // estimator's true sampling error by far.
    {
        double xi_mean = 0.0;
        for (double v : xi) xi_mean += v;
        xi_mean /= static_cast<double>(M);
        std::vector<double> h(static_cast<std::size_t>(M));
        for (long m = 0; m < M; ++m)
            h[static_cast<std::size_t>(m)] =
                std::exp(2.0 * (xi[static_cast<std::size_t>(m)] - xi_mean));
        double hm = 0.0;
        for (double v : h) hm += v;
        hm /= static_cast<double>(M);
        sol.y0_std_error = detail::sample_std_error(h) / (2.0 * hm);
    }
    if (!sol.all_finite()) throw NumericalBlowup("blowup: non-finite solution field", 0);
    return sol;
}

}  // namespace qbsde
