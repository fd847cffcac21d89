#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qbsde/paths.hpp"
#include "qbsde/time_grid.hpp"

namespace qbsde {

/// Terminal value xi as a functional of a whole simulated path.
using TerminalFn = std::function<double(const PathEnsemble&, long path)>;

/// Per-backward-step solver record.
struct StepDiagnostics {
    long step = 0;
    int fixed_point_iterations = 0;
    double fixed_point_residual = 0.0;
    bool damped = false;
    double z_clamp_radius = 0.0;
    double regression_rms_y = 0.0;
    double condition_y = 0.0;
    double regression_rms_z = 0.0;
    double condition_z = 0.0;
};

/// Discrete (Y, Z) fields over (time step x path). The terminal layer always
/// holds xi exactly; Z has one row per step interval.
struct BsdeSolution {
    TimeGrid grid;
    long num_paths = 0;
    int dim_w = 1;
    std::uint64_t ensemble_seed = 0;
    std::string method;

    std::vector<double> y;  // (N+1) x M
    std::vector<double> z;  // N x M x d
    std::vector<StepDiagnostics> diagnostics;
    double y0_std_error = 0.0;

    double y_at(long node, long path) const {
        return y[static_cast<std::size_t>(node) * num_paths + path];
    }
    double& y_at(long node, long path) {
        return y[static_cast<std::size_t>(node) * num_paths + path];
    }
    double z_at(long step, long path, int c = 0) const {
        return z[(static_cast<std::size_t>(step) * num_paths + path) * dim_w + c];
    }
    double& z_at(long step, long path, int c = 0) {
        return z[(static_cast<std::size_t>(step) * num_paths + path) * dim_w + c];
    }

    double y0() const {
        double s = 0.0;
        for (long m = 0; m < num_paths; ++m) s += y_at(0, m);
        return s / static_cast<double>(num_paths);
    }

    /// Cross-path mean of Z at one step.
    double z_mean(long step, int c = 0) const {
        double s = 0.0;
        for (long m = 0; m < num_paths; ++m) s += z_at(step, m, c);
        return s / static_cast<double>(num_paths);
    }

    bool all_finite() const {
        for (double v : y)
            if (!std::isfinite(v)) return false;
        for (double v : z)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void allocate(const PathEnsemble& e) {
        grid = e.grid;
        num_paths = e.num_paths;
        dim_w = e.dim_w;
        ensemble_seed = e.seed;
        y.assign(static_cast<std::size_t>(grid.steps + 1) * num_paths, 0.0);
        z.assign(static_cast<std::size_t>(grid.steps) * num_paths * dim_w, 0.0);
    }
};

/// Regression features at a grid node: forward states when present, the
/// Brownian point otherwise. Row-major M x dim.
inline std::vector<double> node_features(const PathEnsemble& e, long node, int& dim) {
    dim = e.has_states() ? e.dim_x : e.dim_w;
    std::vector<double> out(static_cast<std::size_t>(e.num_paths) * dim);
    const int d = dim;
    parallel_for(0, e.num_paths, [&, d](long m) {
        for (int c = 0; c < d; ++c)
            out[static_cast<std::size_t>(m) * d + c] =
                e.has_states() ? e.state(node, m, c) : e.brownian(node, m, c);
    });
    return out;
}

/// Sample xi over all paths, rejecting non-finite values.
inline std::vector<double> sample_terminal(const TerminalFn& xi_fn, const PathEnsemble& e) {
    std::vector<double> xi(static_cast<std::size_t>(e.num_paths));
    for (long m = 0; m < e.num_paths; ++m) {
        xi[static_cast<std::size_t>(m)] = xi_fn(e, m);
        if (!std::isfinite(xi[static_cast<std::size_t>(m)]))
            throw InvalidConfig("invalid-payoff: non-finite terminal value");
    }
    return xi;
}

}  // namespace qbsde
