#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "qbsde/generator.hpp"
#include "qbsde/regression.hpp"
#include "qbsde/solution.hpp"

namespace qbsde {

struct BackwardSolverConfig {
    BasisSpec basis{4};
    double ridge = 0.0;
    /// Inner fixed-point tolerance and cap for the implicit Y step.
    double picard_tol = 1e-10;
    int picard_max = 50;
    /// Clamp continuation-value predictions to the sample range of their
    /// targets (suppresses Runge-type extrapolation on tail paths).
    bool clamp_continuation = true;
    /// Cross-sectional quantile at which |Z| predictions are clamped before
    /// entering the driver; outliers enter F quadratically. 1.0 disables.
    double z_clamp_quantile = 0.999;
};

namespace detail {

inline double quantile_abs(std::vector<double> values, double q) {
    for (auto& v : values) v = std::abs(v);
    const auto k = static_cast<std::size_t>(
        std::min<double>(static_cast<double>(values.size() - 1),
                         q * static_cast<double>(values.size())));
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k),
                     values.end());
    return values[k];
}

}  // namespace detail

/// Generic backward least-squares scheme for quadratic-growth drivers:
/// explicit in Z (martingale-increment regression of the next layer),
/// implicit in Y (per-path damped fixed point of
/// y = E_hat + F(t_i, x_i, y, z_i) dt). The driver is evaluated at the left
/// time endpoint. Divergence and non-finite values are reported, never
/// masked — quadratic drivers with large terminal values can genuinely
/// explode.
inline BsdeSolution solve_bsde_backward(const GeneratorSpec& gen, const TerminalFn& xi_fn,
                                        const PathEnsemble& ensemble,
                                        const BackwardSolverConfig& cfg = {}) {
    if (ensemble.dim_w > 8)
        throw InvalidConfig("invalid-config: backward solver supports at most 8 components");
    verify_declared_conditions(gen, ensemble.grid.horizon);
    auto xi = sample_terminal(xi_fn, ensemble);

    BsdeSolution sol;
    sol.allocate(ensemble);
    sol.method = "lsmc-backward";
    const long N = ensemble.grid.steps;
    const long M = ensemble.num_paths;
    const int d = ensemble.dim_w;
    const double dt = ensemble.grid.dt();
    for (long m = 0; m < M; ++m) sol.y_at(N, m) = xi[static_cast<std::size_t>(m)];

    std::vector<double> continuation(static_cast<std::size_t>(M));
    std::vector<double> ztarget(static_cast<std::size_t>(M));
    std::vector<double> zrow(static_cast<std::size_t>(d));

    for (long i = N - 1; i >= 0; --i) {
        const double t = ensemble.grid.node(i);
        int dim = 0;
        auto features = node_features(ensemble, i, dim);

        std::vector<double> next(static_cast<std::size_t>(M));
        for (long m = 0; m < M; ++m) next[static_cast<std::size_t>(m)] = sol.y_at(i + 1, m);
        auto fit_y = fit_condexp(features, M, dim, next, cfg.basis, cfg.ridge,
                                 cfg.clamp_continuation);
        StepDiagnostics diag;
        diag.step = i;
        diag.regression_rms_y = fit_y.residual_rms;
        diag.condition_y = fit_y.condition_estimate;
        for (long m = 0; m < M; ++m) {
            std::span<const double> row{&features[static_cast<std::size_t>(m) * dim],
                                        static_cast<std::size_t>(dim)};
            continuation[static_cast<std::size_t>(m)] = fit_y.predict(row);
        }

        for (int c = 0; c < d; ++c) {
            for (long m = 0; m < M; ++m)
                ztarget[static_cast<std::size_t>(m)] =
                    (next[static_cast<std::size_t>(m)] - continuation[static_cast<std::size_t>(m)]) *
                    ensemble.increment(i, m, c) / dt;
            auto fit_z = fit_condexp(features, M, dim, ztarget, cfg.basis, cfg.ridge, false);
            diag.regression_rms_z = fit_z.residual_rms;
            diag.condition_z = fit_z.condition_estimate;
            for (long m = 0; m < M; ++m) {
                std::span<const double> row{&features[static_cast<std::size_t>(m) * dim],
                                            static_cast<std::size_t>(dim)};
                sol.z_at(i, m, c) = fit_z.predict(row);
            }
        }
        if (cfg.z_clamp_quantile < 1.0) {
            double radius = 0.0;
            for (int c = 0; c < d; ++c) {
                std::vector<double> col(static_cast<std::size_t>(M));
                for (long m = 0; m < M; ++m) col[static_cast<std::size_t>(m)] = sol.z_at(i, m, c);
                const double r = detail::quantile_abs(std::move(col), cfg.z_clamp_quantile);
                radius = std::max(radius, r);
                for (long m = 0; m < M; ++m)
                    sol.z_at(i, m, c) = std::clamp(sol.z_at(i, m, c), -r, r);
            }
            diag.z_clamp_radius = radius;
        }

        // Implicit step in Y, one damped fixed point per path; paths are
        // independent, so the sweep parallelizes with per-path slots and a
        // sequential reduction of the diagnostics.
        std::vector<int> iters(static_cast<std::size_t>(M), 0);
        std::vector<double> resids(static_cast<std::size_t>(M), 0.0);
        std::vector<unsigned char> damped_flags(static_cast<std::size_t>(M), 0);
        parallel_for(0, M, [&](long m) {
            double local_z[8];
            for (int c = 0; c < d; ++c) local_z[c] = sol.z_at(i, m, c);
            std::span<const double> zspan{local_z, static_cast<std::size_t>(d)};
            std::span<const double> state =
                ensemble.has_states() ? ensemble.state_vector(i, m) : std::span<const double>{};
            const double base = continuation[static_cast<std::size_t>(m)];
            double y = base + gen.evaluate(t, state, base, zspan) * dt;
            double prev_delta = 0.0;
            double resid = std::abs(y - base);
            double damping = 1.0;
            int grow_streak = 0;
            int it = 1;
            for (; it < cfg.picard_max; ++it) {
                const double proposal = base + gen.evaluate(t, state, y, zspan) * dt;
                const double delta = proposal - y;
                const double new_resid = std::abs(delta);
                if (new_resid <= cfg.picard_tol * (1.0 + std::abs(y))) {
                    y = proposal;
                    resid = new_resid;
                    break;
                }
                if (delta * prev_delta < 0.0 && damping == 1.0) {
                    damping = 0.5;  // oscillation detected
                    damped_flags[static_cast<std::size_t>(m)] = 1;
                }
                grow_streak = new_resid > resid ? grow_streak + 1 : 0;
                if (grow_streak >= 3)
                    throw StepDivergence("step-divergence: implicit Y iteration residual grew", i);
                y += damping * delta;
                prev_delta = delta;
                resid = new_resid;
            }
            if (!std::isfinite(y))
                throw NumericalBlowup("blowup: non-finite Y in backward step", i);
            sol.y_at(i, m) = y;
            iters[static_cast<std::size_t>(m)] = it;
            resids[static_cast<std::size_t>(m)] = resid;
        });
        for (long m = 0; m < M; ++m) {
            diag.fixed_point_iterations =
                std::max(diag.fixed_point_iterations, iters[static_cast<std::size_t>(m)]);
            diag.fixed_point_residual =
                std::max(diag.fixed_point_residual, resids[static_cast<std::size_t>(m)]);
            diag.damped = diag.damped || damped_flags[static_cast<std::size_t>(m)] != 0;
        }
        sol.diagnostics.push_back(diag);
    }
    std::reverse(sol.diagnostics.begin(), sol.diagnostics.end());

    // Monte Carlo error proxy for Y_0: dispersion of the pathwise equation
    // value xi + sum F(t_i, Y_i, Z_i) dt, whose mean the regression chain
    // reproduces when the driver vanishes and tracks closely otherwise.
    {
        std::vector<double> path_value(xi);
        for (long m = 0; m < M; ++m) {
            double acc = 0.0;
            for (long i = 0; i < N; ++i) {
                for (int c = 0; c < d; ++c) zrow[static_cast<std::size_t>(c)] = sol.z_at(i, m, c);
                std::span<const double> state = ensemble.has_states()
                                                    ? ensemble.state_vector(i, m)
                                                    : std::span<const double>{};
                acc += gen.evaluate(ensemble.grid.node(i), state, sol.y_at(i, m), zrow) * dt;
            }
            path_value[static_cast<std::size_t>(m)] += acc;
        }
        double mean = 0.0;
        for (double v : path_value) mean += v;
        mean /= static_cast<double>(M);
        double var = 0.0;
        for (double v : path_value) var += (v - mean) * (v - mean);
        var /= static_cast<double>(M > 1 ? M - 1 : 1);
        sol.y0_std_error = std::sqrt(var / static_cast<double>(M));
    }
    if (!sol.all_finite()) throw NumericalBlowup("blowup: non-finite solution field", 0);
    return sol;
}

struct PicardConfig {
    BasisSpec basis{4};
    double ridge = 0.0;
    int iter_max = 20;
    double tol = 1e-4;
    bool clamp_continuation = true;
};

struct PicardResult {
    BsdeSolution solution;
    std::vector<double> distances;  // sup-over-time mean |Y^{k+1} - Y^k| per iteration
    bool converged = false;
    int iterations = 0;
};

/// Global Picard iteration mirroring the Banach fixed-point construction:
/// each sweep solves the linear equation with the driver frozen at the
/// previous iterate, Y_i = E[xi + sum_{j>=i} F(t_j, y_j, z_j) dt | F_i],
/// via one regression per node, and reads Z off the fitted martingale
/// increments. Distances between successive iterates are recorded; the
/// contraction argument under an equivalent norm says they must shrink for
/// Lipschitz drivers at any horizon.
inline PicardResult picard_global_solve(const GeneratorSpec& gen, const TerminalFn& xi_fn,
                                        const PathEnsemble& ensemble,
                                        const PicardConfig& cfg = {}) {
    if (!gen.flags.lipschitz)
        throw InvalidConfig("picard_global_solve requires a generator with the lipschitz flag");
    verify_declared_conditions(gen, ensemble.grid.horizon);
    auto xi = sample_terminal(xi_fn, ensemble);

    const long N = ensemble.grid.steps;
    const long M = ensemble.num_paths;
    const int d = ensemble.dim_w;
    const double dt = ensemble.grid.dt();

    BsdeSolution sol;
    sol.allocate(ensemble);
    sol.method = "picard-global";
    for (long m = 0; m < M; ++m) sol.y_at(N, m) = xi[static_cast<std::size_t>(m)];

    PicardResult result;
    std::vector<double> y_prev(sol.y), z_prev(sol.z);
    std::vector<double> cumulative(static_cast<std::size_t>(M));
    std::vector<double> target(static_cast<std::size_t>(M));
    std::vector<double> ztarget(static_cast<std::size_t>(M));
    std::vector<double> zrow(static_cast<std::size_t>(d));

    int grow_streak = 0;
    for (int iter = 1; iter <= cfg.iter_max; ++iter) {
        // Frozen-driver running cost xi + sum F(t_j, y^k_j, z^k_j) dt from i up.
        std::fill(cumulative.begin(), cumulative.end(), 0.0);
        StepDiagnostics agg;
        for (long i = N - 1; i >= 0; --i) {
            const double t = ensemble.grid.node(i);
            for (long m = 0; m < M; ++m) {
                for (int c = 0; c < d; ++c)
                    zrow[static_cast<std::size_t>(c)] =
                        z_prev[(static_cast<std::size_t>(i) * M + m) * d + c];
                std::span<const double> state = ensemble.has_states()
                                                    ? ensemble.state_vector(i, m)
                                                    : std::span<const double>{};
                cumulative[static_cast<std::size_t>(m)] +=
                    gen.evaluate(t, state,
                                 y_prev[static_cast<std::size_t>(i) * M + m], zrow) *
                    dt;
                target[static_cast<std::size_t>(m)] =
                    xi[static_cast<std::size_t>(m)] + cumulative[static_cast<std::size_t>(m)];
            }
            int dim = 0;
            auto features = node_features(ensemble, i, dim);
            auto fit_y = fit_condexp(features, M, dim, target, cfg.basis, cfg.ridge,
                                     cfg.clamp_continuation);
            for (long m = 0; m < M; ++m) {
                std::span<const double> row{&features[static_cast<std::size_t>(m) * dim],
                                            static_cast<std::size_t>(dim)};
                sol.y_at(i, m) = fit_y.predict(row);
            }
            for (int c = 0; c < d; ++c) {
                for (long m = 0; m < M; ++m)
                    ztarget[static_cast<std::size_t>(m)] =
                        (sol.y_at(i + 1, m) - sol.y_at(i, m)) * ensemble.increment(i, m, c) / dt;
                auto fit_z = fit_condexp(features, M, dim, ztarget, cfg.basis, cfg.ridge, false);
                for (long m = 0; m < M; ++m) {
                    std::span<const double> row{&features[static_cast<std::size_t>(m) * dim],
                                                static_cast<std::size_t>(dim)};
                    sol.z_at(i, m, c) = fit_z.predict(row);
                }
            }
            agg.regression_rms_y = std::max(agg.regression_rms_y, fit_y.residual_rms);
            agg.condition_y = std::max(agg.condition_y, fit_y.condition_estimate);
        }
        agg.step = iter;
        sol.diagnostics.push_back(agg);

        double dist = 0.0;
        for (long i = 0; i < N; ++i) {
            double layer = 0.0;
            for (long m = 0; m < M; ++m)
                layer += std::abs(sol.y_at(i, m) - y_prev[static_cast<std::size_t>(i) * M + m]);
            dist = std::max(dist, layer / static_cast<double>(M));
        }
        result.distances.push_back(dist);
        result.iterations = iter;

        y_prev = sol.y;
        z_prev = sol.z;
        if (dist <= cfg.tol) {
            result.converged = true;
            break;
        }
        const std::size_t k = result.distances.size();
        grow_streak =
            (k >= 2 && result.distances[k - 1] > result.distances[k - 2]) ? grow_streak + 1 : 0;
        if (grow_streak >= 3)
            throw ContractionFailure(
                "contraction-failure: Picard distances grew for 3 consecutive iterations",
                result.distances);
    }

    {
        double mean = 0.0;
        for (long m = 0; m < M; ++m)
            mean += xi[static_cast<std::size_t>(m)] + cumulative[static_cast<std::size_t>(m)];
        mean /= static_cast<double>(M);
        double var = 0.0;
        for (long m = 0; m < M; ++m) {
            const double v =
                xi[static_cast<std::size_t>(m)] + cumulative[static_cast<std::size_t>(m)] - mean;
            var += v * v;
        }
        var /= static_cast<double>(M > 1 ? M - 1 : 1);
        sol.y0_std_error = std::sqrt(var / static_cast<double>(M));
    }
    result.solution = std::move(sol);
    return result;
}

}  // namespace qbsde
