#pragma once

#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qbsde/errors.hpp"
#include "qbsde/parallel.hpp"
#include "qbsde/rng.hpp"
#include "qbsde/time_grid.hpp"

namespace qbsde {

/// A seeded Brownian ensemble over a time grid, plus optional forward-SDE
/// states. Increments are retained (not just states) because the regression
/// Z estimator needs dW per step. Arrays are immutable once filled; concurrent
/// reads are safe.
struct PathEnsemble {
    TimeGrid grid;
    int dim_w = 1;       // Brownian dimension d
    long num_paths = 0;  // M
    std::uint64_t seed = 0;

    /// Increments, step-major: dw[(i*M + m)*d + c] for step i, path m, component c.
    std::vector<double> dw;
    /// Cumulative Brownian path at nodes: w[(i*M + m)*d + c], i = 0..N.
    std::vector<double> w;
    /// Forward states at nodes (filled by the forward solver): x[(i*M + m)*n + c].
    std::vector<double> x;
    int dim_x = 0;
    long start_index = 0;  // states frozen at x0 before this node

    bool has_states() const { return !x.empty(); }

    double increment(long step, long path, int c = 0) const {
        return dw[(static_cast<std::size_t>(step) * num_paths + path) * dim_w + c];
    }
    double brownian(long node, long path, int c = 0) const {
        return w[(static_cast<std::size_t>(node) * num_paths + path) * dim_w + c];
    }
    double state(long node, long path, int c = 0) const {
        return x[(static_cast<std::size_t>(node) * num_paths + path) * dim_x + c];
    }
    std::span<const double> state_vector(long node, long path) const {
        return {&x[(static_cast<std::size_t>(node) * num_paths + path) * dim_x],
                static_cast<std::size_t>(dim_x)};
    }
};

/// Gaussian increments with variance dt per component, addressed by
/// (seed, path, step, component); bit-identical for a given seed regardless
/// of thread count.
inline PathEnsemble simulate_brownian(TimeGrid grid, int d, long num_paths, std::uint64_t seed) {
    if (num_paths < 1 || d < 1)
        throw InvalidConfig("invalid-config: simulate_brownian needs paths >= 1, d >= 1");
    PathEnsemble e;
    e.grid = grid;
    e.dim_w = d;
    e.num_paths = num_paths;
    e.seed = seed;
    const long N = grid.steps;
    const double sq_dt = std::sqrt(grid.dt());
    e.dw.resize(static_cast<std::size_t>(N) * num_paths * d);
    e.w.resize(static_cast<std::size_t>(N + 1) * num_paths * d, 0.0);
    for (long i = 0; i < N; ++i) {
        const std::size_t row = static_cast<std::size_t>(i) * num_paths * d;
        parallel_for(0, num_paths, [&, i, row](long m) {
            for (int c = 0; c < d; ++c) {
                const double z = normal_draw(seed, static_cast<std::uint64_t>(m),
                                             static_cast<std::uint32_t>(i),
                                             static_cast<std::uint32_t>(c));
                const std::size_t k = row + static_cast<std::size_t>(m) * d + c;
                e.dw[k] = sq_dt * z;
                e.w[k + static_cast<std::size_t>(num_paths) * d] = e.w[k] + e.dw[k];
            }
        });
    }
    return e;
}

using DriftFn = std::function<void(double t, std::span<const double> x, std::span<double> out)>;
using DiffusionFn =
    std::function<void(double t, std::span<const double> x, std::span<double> out_n_by_d)>;

/// Euler-Maruyama forward states X_{i+1} = X_i + b dt + sigma dW on the
/// ensemble's grid, frozen at x0 before the start node.
inline void simulate_forward_sde(const DriftFn& drift, const DiffusionFn& diffusion, double t0,
                                 std::span<const double> x0, PathEnsemble& e) {
    const long i0 = e.grid.index_of(t0);
    if (i0 < 0) throw InvalidConfig("invalid-start: t0 is not a grid node");
    const int n = static_cast<int>(x0.size());
    const int d = e.dim_w;
    const long N = e.grid.steps;
    const long M = e.num_paths;
    const double dt = e.grid.dt();
    e.dim_x = n;
    e.start_index = i0;
    e.x.assign(static_cast<std::size_t>(N + 1) * M * n, 0.0);
    for (long i = 0; i <= i0; ++i)
        parallel_for(0, M, [&](long m) {
            for (int c = 0; c < n; ++c)
                e.x[(static_cast<std::size_t>(i) * M + m) * n + c] = x0[c];
        });
    constexpr int kMaxDim = 8;
    if (n > kMaxDim || d > kMaxDim)
        throw InvalidConfig("invalid-config: forward SDE supports at most 8 dimensions");
    for (long i = i0; i < N; ++i) {
        const double t = e.grid.node(i);
        std::atomic<long> bad_step{-1};
        parallel_for(0, M, [&](long m) {
            double b[kMaxDim], s[kMaxDim * kMaxDim], next[kMaxDim];
            const std::size_t at = (static_cast<std::size_t>(i) * M + m) * n;
            std::span<const double> xi{&e.x[at], static_cast<std::size_t>(n)};
            drift(t, xi, {b, static_cast<std::size_t>(n)});
            diffusion(t, xi, {s, static_cast<std::size_t>(n) * d});
            for (int c = 0; c < n; ++c) {
                double diff = 0.0;
                for (int k = 0; k < d; ++k) diff += s[c * d + k] * e.increment(i, m, k);
                next[c] = xi[c] + b[c] * dt + diff;
                if (!std::isfinite(next[c])) bad_step.store(i);
            }
            std::copy(next, next + n,
                      e.x.begin() + static_cast<std::ptrdiff_t>(at) +
                          static_cast<std::ptrdiff_t>(M) * n);
        });
        if (bad_step.load() >= 0)
            throw NumericalBlowup("numerical-blowup: forward SDE produced non-finite state",
                                  bad_step.load());
    }
}

/// Sum adjacent increments to halve (or coarsen by any factor) the grid while
/// keeping each path's terminal value bit-identical. Used by refinement
/// studies so that dt-bias trends are not drowned in fresh Monte Carlo noise.
inline PathEnsemble coarsen(const PathEnsemble& fine, long factor) {
    if (factor < 1 || fine.grid.steps % factor != 0)
        throw InvalidConfig("invalid-config: coarsen factor must divide the step count");
    PathEnsemble e;
    e.grid = TimeGrid(fine.grid.horizon, fine.grid.steps / factor);
    e.dim_w = fine.dim_w;
    e.num_paths = fine.num_paths;
    e.seed = fine.seed;
    const long M = e.num_paths;
    const int d = e.dim_w;
    e.dw.assign(static_cast<std::size_t>(e.grid.steps) * M * d, 0.0);
    e.w.resize(static_cast<std::size_t>(e.grid.steps + 1) * M * d);
    for (long i = 0; i <= e.grid.steps; ++i) {
        const std::size_t src = static_cast<std::size_t>(i * factor) * M * d;
        std::copy(fine.w.begin() + static_cast<std::ptrdiff_t>(src),
                  fine.w.begin() + static_cast<std::ptrdiff_t>(src + static_cast<std::size_t>(M) * d),
                  e.w.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(i) * M * d));
    }
    for (long i = 0; i < e.grid.steps; ++i)
        for (std::size_t k = 0; k < static_cast<std::size_t>(M) * d; ++k)
            e.dw[static_cast<std::size_t>(i) * M * d + k] =
                e.w[(static_cast<std::size_t>(i) + 1) * M * d + k] -
                e.w[static_cast<std::size_t>(i) * M * d + k];
    return e;
}

namespace detail {
inline std::uint64_t swap_bytes(std::uint64_t v) {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out = (out << 8) | ((v >> (8 * i)) & 0xFFull);
    return out;
}
inline void put_u64(std::ostream& os, std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) v = swap_bytes(v);
    os.write(reinterpret_cast<const char*>(&v), 8);
}
inline std::uint64_t get_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    if constexpr (std::endian::native == std::endian::big) v = swap_bytes(v);
    return v;
}
inline void put_f64(std::ostream& os, double x) {
    put_u64(os, std::bit_cast<std::uint64_t>(x));
}
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }
}  // namespace detail

/// Binary dump for cross-run and cross-language comparison.
/// Header: magic, seed, T, N, d, M; payload: increments as little-endian f64.
inline void dump_ensemble(const PathEnsemble& e, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("io-error: cannot open '" + path + "' for writing");
    detail::put_u64(os, 0x51425344454E5331ull);  // "QBSDENS1"
    detail::put_u64(os, e.seed);
    detail::put_f64(os, e.grid.horizon);
    detail::put_u64(os, static_cast<std::uint64_t>(e.grid.steps));
    detail::put_u64(os, static_cast<std::uint64_t>(e.dim_w));
    detail::put_u64(os, static_cast<std::uint64_t>(e.num_paths));
    for (double v : e.dw) detail::put_f64(os, v);
    if (!os) throw Error("io-error: short write to '" + path + "'");
}

inline PathEnsemble load_ensemble(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("io-error: cannot open '" + path + "'");
    if (detail::get_u64(is) != 0x51425344454E5331ull)
        throw Error("io-error: '" + path + "' is not an ensemble dump");
    PathEnsemble e;
    e.seed = detail::get_u64(is);
    const double T = detail::get_f64(is);
    const long N = static_cast<long>(detail::get_u64(is));
    e.dim_w = static_cast<int>(detail::get_u64(is));
    e.num_paths = static_cast<long>(detail::get_u64(is));
    e.grid = TimeGrid(T, N);
    const std::size_t count = static_cast<std::size_t>(N) * e.num_paths * e.dim_w;
    e.dw.resize(count);
    for (auto& v : e.dw) v = detail::get_f64(is);
    if (!is) throw Error("io-error: truncated ensemble dump '" + path + "'");
    e.w.assign(static_cast<std::size_t>(N + 1) * e.num_paths * e.dim_w, 0.0);
    for (long i = 0; i < N; ++i)
        for (std::size_t k = 0; k < static_cast<std::size_t>(e.num_paths) * e.dim_w; ++k)
            e.w[(static_cast<std::size_t>(i) + 1) * e.num_paths * e.dim_w + k] =
                e.w[static_cast<std::size_t>(i) * e.num_paths * e.dim_w + k] +
                e.dw[static_cast<std::size_t>(i) * e.num_paths * e.dim_w + k];
    return e;
}

}  // namespace qbsde
