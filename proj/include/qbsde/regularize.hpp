#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "qbsde/generator.hpp"
#include "qbsde/lsmc.hpp"
#include "qbsde/solution.hpp"

namespace qbsde {

/// Compact box in (y, z)-space over which the Lipschitz envelopes are built.
struct TruncBox {
    double y_lo = -10.0, y_hi = 10.0;
    double z_lo = -10.0, z_hi = 10.0;
    int dim_z = 1;
};

namespace detail {

/// In-place (min,+) cone transform along one axis of a flattened lattice:
/// a[i] <- min_j (a[j] + slope * |x_i - x_j|), done with the classic
/// two-pass scan. Applying it along every axis yields the exact grid
/// infimum of val + slope * l1-distance.
inline void cone_scan_axis(std::vector<double>& a, long stride, long extent, long repeat,
                           double slope_h) {
    for (long r = 0; r < repeat; ++r) {
        // Base index of this 1-d line through the lattice.
        const long base = (r / stride) * stride * extent + (r % stride);
        for (long i = 1; i < extent; ++i) {
            auto& cur = a[static_cast<std::size_t>(base + i * stride)];
            cur = std::min(cur, a[static_cast<std::size_t>(base + (i - 1) * stride)] + slope_h);
        }
        for (long i = extent - 2; i >= 0; --i) {
            auto& cur = a[static_cast<std::size_t>(base + i * stride)];
            cur = std::min(cur, a[static_cast<std::size_t>(base + (i + 1) * stride)] + slope_h);
        }
    }
}

}  // namespace detail

/// The Lipschitz regularization F^{n,k} of a driver: the n-Lipschitz lower
/// envelope of the positive part minus the k-Lipschitz lower envelope of the
/// negative part, each multiplied by its cost-budget time indicator. Built by
/// grid search over the truncation box (the two-pass cone scan computes the
/// exact grid infimum); off-lattice queries take the minimum over the
/// surrounding cell corners plus the cone distance, and points outside the
/// box enter through their box projection. The reported error bound is
/// max(n, k) * grid spacing.
class RegularizedGenerator {
public:
    RegularizedGenerator(GeneratorSpec base, int n, int k, TruncBox box, int grid_per_axis = 257)
        : base_(std::move(base)), n_(n), k_(k), box_(box), pts_(grid_per_axis) {
        if (grid_per_axis < 64)
            throw InvalidConfig("invalid-config: need at least 64 grid points per axis");
        if (box.dim_z < 1 || box.dim_z > 2)
            throw InvalidConfig(
                "invalid-config: regularization studies support z dimension 1 or 2 "
                "(the z-grid search is exponential in the dimension)");
        if (!(box.y_lo < box.y_hi) || !(box.z_lo < box.z_hi))
            throw InvalidConfig("invalid-config: empty truncation box");
        if (n < 1 || k < 1) throw InvalidConfig("invalid-config: n, k must be >= 1");
        hy_ = (box.y_hi - box.y_lo) / static_cast<double>(pts_ - 1);
        hz_ = (box.z_hi - box.z_lo) / static_cast<double>(pts_ - 1);
        cache_ = std::make_shared<Cache>();
    }

    int n() const { return n_; }
    int k() const { return k_; }
    const GeneratorSpec& base() const { return base_; }

    /// Error bound from the lattice spacing.
    double error_bound() const {
        return static_cast<double>(std::max(n_, k_)) * std::max(hy_, hz_);
    }

    /// Drivers must not read the forward state here: the lattice cache is
    /// keyed by time alone.
    double evaluate(double t, double y, std::span<const double> z) const {
        const auto& tables = tables_for(t);
        // The query point itself always competes with the lattice: the
        // infimum candidate at the diagonal has zero cone cost, which makes
        // cone-dominated regions exact instead of spacing-limited.
        const double f = base_.evaluate(t, {}, y, z);
        double v = 0.0;
        const double budget = base_.alpha_budget(t);
        if (budget <= static_cast<double>(n_))
            v += std::min(query(tables.pos, n_, y, z), std::max(f, 0.0));
        if (budget <= static_cast<double>(k_))
            v -= std::min(query(tables.neg, k_, y, z), std::max(-f, 0.0));
        return v;
    }

    /// Wrap as a plain GeneratorSpec sharing this object's lattice cache.
    GeneratorSpec as_generator_spec() const {
        GeneratorSpec g = base_;
        auto self = *this;  // shallow copy; cache shared through shared_ptr
        g.driver = [self](double t, std::span<const double>, double y,
                          std::span<const double> z) { return self.evaluate(t, y, z); };
        g.beta = static_cast<double>(std::max(n_, k_));
        g.gamma = static_cast<double>(std::max(n_, k_));
        return g;
    }

private:
    struct Tables {
        std::vector<double> pos;  // n-Lipschitz envelope of F^+
        std::vector<double> neg;  // k-Lipschitz envelope of F^-
    };
    struct Cache {
        std::mutex mutex;
        std::map<double, std::shared_ptr<const Tables>> by_time;
    };

    GeneratorSpec base_;
    int n_, k_;
    TruncBox box_;
    long pts_;
    double hy_ = 0.0, hz_ = 0.0;
    std::shared_ptr<Cache> cache_;

    long lattice_size() const {
        long s = pts_;
        for (int c = 0; c < box_.dim_z; ++c) s *= pts_;
        return s;
    }

    const Tables& tables_for(double t) const {
        {
            std::lock_guard<std::mutex> lock(cache_->mutex);
            auto it = cache_->by_time.find(t);
            if (it != cache_->by_time.end()) return *it->second;
        }
        auto tables = std::make_shared<Tables>();
        const long total = lattice_size();
        tables->pos.resize(static_cast<std::size_t>(total));
        tables->neg.resize(static_cast<std::size_t>(total));
        std::vector<double> z(static_cast<std::size_t>(box_.dim_z));
        for (long idx = 0; idx < total; ++idx) {
            long rest = idx;
            const double y = box_.y_lo + hy_ * static_cast<double>(rest % pts_);
            rest /= pts_;
            for (int c = 0; c < box_.dim_z; ++c) {
                z[static_cast<std::size_t>(c)] =
                    box_.z_lo + hz_ * static_cast<double>(rest % pts_);
                rest /= pts_;
            }
            const double f = base_.evaluate(t, {}, y, z);
            tables->pos[static_cast<std::size_t>(idx)] = std::max(f, 0.0);
            tables->neg[static_cast<std::size_t>(idx)] = std::max(-f, 0.0);
        }
        // Separable cone transform: y axis (stride 1), then each z axis.
        long stride = 1;
        for (int axis = 0; axis <= box_.dim_z; ++axis) {
            const double h = axis == 0 ? hy_ : hz_;
            detail::cone_scan_axis(tables->pos, stride, pts_, total / pts_,
                                   static_cast<double>(n_) * h);
            detail::cone_scan_axis(tables->neg, stride, pts_, total / pts_,
                                   static_cast<double>(k_) * h);
            stride *= pts_;
        }
        std::lock_guard<std::mutex> lock(cache_->mutex);
        auto [it, inserted] = cache_->by_time.emplace(t, std::move(tables));
        return *it->second;
    }

    double query(const std::vector<double>& table, int slope, double y,
                 std::span<const double> z) const {
        // Box projection; the cone cost to the projection adds exactly.
        double outside = 0.0;
        const double yc = std::clamp(y, box_.y_lo, box_.y_hi);
        outside += std::abs(y - yc);
        double zc[2] = {0.0, 0.0};
        for (int c = 0; c < box_.dim_z; ++c) {
            zc[c] = std::clamp(z[static_cast<std::size_t>(c)], box_.z_lo, box_.z_hi);
            outside += std::abs(z[static_cast<std::size_t>(c)] - zc[c]);
        }
        // Surrounding cell corners.
        const double fy = (yc - box_.y_lo) / hy_;
        const long iy = std::clamp<long>(static_cast<long>(fy), 0, pts_ - 2);
        long izs[2] = {0, 0};
        for (int c = 0; c < box_.dim_z; ++c) {
            const double fz = (zc[c] - box_.z_lo) / hz_;
            izs[c] = std::clamp<long>(static_cast<long>(fz), 0, pts_ - 2);
        }
        double best = std::numeric_limits<double>::infinity();
        const int corners = 1 << (1 + box_.dim_z);
        for (int mask = 0; mask < corners; ++mask) {
            const long jy = iy + (mask & 1);
            double dist = std::abs(yc - (box_.y_lo + hy_ * static_cast<double>(jy)));
            long idx = jy;
            long mult = pts_;
            for (int c = 0; c < box_.dim_z; ++c) {
                const long jz = izs[c] + ((mask >> (c + 1)) & 1);
                dist += std::abs(zc[c] - (box_.z_lo + hz_ * static_cast<double>(jz)));
                idx += jz * mult;
                mult *= pts_;
            }
            best = std::min(best,
                            table[static_cast<std::size_t>(idx)] +
                                static_cast<double>(slope) * dist);
        }
        return best + static_cast<double>(slope) * outside;
    }
};

inline RegularizedGenerator inf_convolution(const GeneratorSpec& base, int n, int k,
                                            const TruncBox& box, int grid_per_axis = 257) {
    return RegularizedGenerator(base, n, k, box, grid_per_axis);
}

/// The clamp mapping rho(y) = max(-m, min(y, m)) and its composition with a
/// driver, used to bound the y-argument on a localized interval.
struct StateTruncation {
    double bound;
    double operator()(double y) const { return std::clamp(y, -bound, bound); }
    GeneratorSpec compose(const GeneratorSpec& g) const {
        GeneratorSpec out = g;
        auto inner = g.driver;
        const double m = bound;
        out.driver = [inner, m](double t, std::span<const double> state, double y,
                                std::span<const double> z) {
            return inner(t, state, std::clamp(y, -m, m), z);
        };
        return out;
    }
};

inline StateTruncation truncate_state(double m) {
    if (!(m > 0.0)) throw InvalidConfig("truncate_state: bound must be positive");
    return StateTruncation{m};
}

/// Clipped terminal value xi^{n,k} = min(xi^+, n) - min(xi^-, k).
inline TerminalFn clip_terminal(const TerminalFn& xi_fn, double n, double k) {
    return [xi_fn, n, k](const PathEnsemble& e, long m) {
        const double v = xi_fn(e, m);
        return std::min(std::max(v, 0.0), n) - std::min(std::max(-v, 0.0), k);
    };
}

struct ConvergenceStudyResult {
    std::vector<int> n_list, k_list;
    std::vector<double> y0;         // row-major n x k
    std::vector<double> y0_stderr;  // same layout
    bool monotone_in_n = true;      // within tolerance
    bool antitone_in_k = true;
    double tolerance = 0.0;
    /// |Y0^{n,k} - Y0(direct)| for the largest (n, k) when a direct solve ran.
    double gap_to_direct = std::numeric_limits<double>::quiet_NaN();
    double direct_y0 = std::numeric_limits<double>::quiet_NaN();

    double at(std::size_t i, std::size_t j) const { return y0[i * k_list.size() + j]; }
    double se_at(std::size_t i, std::size_t j) const {
        return y0_stderr[i * k_list.size() + j];
    }
};

struct ConvergenceStudyConfig {
    TruncBox box;
    int grid_per_axis = 257;
    BackwardSolverConfig solver{BasisSpec{6, {}, {1.0}}};
    /// Statistical slack multiplier applied to combined standard errors in
    /// the monotonicity verdicts.
    double stderr_multiple = 2.0;
    bool run_direct = true;
};

/// Solve (F^{n,k}, xi^{n,k}) for every pair in the lists on one shared
/// ensemble, report the Y0 matrix, verify monotone-in-n / antitone-in-k
/// within statistical tolerance, and record the gap to the direct solve.
inline ConvergenceStudyResult regularized_convergence_study(
    const GeneratorSpec& base, const TerminalFn& xi_fn, const PathEnsemble& ensemble,
    std::vector<int> n_list, std::vector<int> k_list, const ConvergenceStudyConfig& cfg = {}) {
    if (n_list.empty() || k_list.empty())
        throw InvalidConfig("invalid-config: regularization study needs nonempty n and k lists");
    if (!std::is_sorted(n_list.begin(), n_list.end()) ||
        !std::is_sorted(k_list.begin(), k_list.end()))
        throw InvalidConfig("invalid-config: n and k lists must be increasing");

    ConvergenceStudyResult out;
    out.n_list = n_list;
    out.k_list = k_list;
    out.y0.resize(n_list.size() * k_list.size());
    out.y0_stderr.resize(n_list.size() * k_list.size());

    // Cells are independent given the shared read-only ensemble; they fill
    // disjoint matrix slots in parallel.
    const long cells = static_cast<long>(n_list.size() * k_list.size());
    parallel_for(0, cells, [&](long cell) {
        const std::size_t i = static_cast<std::size_t>(cell) / k_list.size();
        const std::size_t j = static_cast<std::size_t>(cell) % k_list.size();
        auto reg = inf_convolution(base, n_list[i], k_list[j], cfg.box, cfg.grid_per_axis);
        auto gen = reg.as_generator_spec();
        auto xi = clip_terminal(xi_fn, n_list[i], k_list[j]);
        try {
            auto sol = solve_bsde_backward(gen, xi, ensemble, cfg.solver);
            out.y0[i * k_list.size() + j] = sol.y0();
            out.y0_stderr[i * k_list.size() + j] = sol.y0_std_error;
        } catch (const Error& err) {
            throw Error("regularization study cell (n=" + std::to_string(n_list[i]) +
                        ", k=" + std::to_string(k_list[j]) + "): " + err.what());
        }
    });

    double tol = 0.0;
    for (double se : out.y0_stderr) tol = std::max(tol, cfg.stderr_multiple * se);
    out.tolerance = tol;
    for (std::size_t j = 0; j < k_list.size(); ++j)
        for (std::size_t i = 0; i + 1 < n_list.size(); ++i)
            if (out.at(i + 1, j) < out.at(i, j) - tol) out.monotone_in_n = false;
    for (std::size_t i = 0; i < n_list.size(); ++i)
        for (std::size_t j = 0; j + 1 < k_list.size(); ++j)
            if (out.at(i, j + 1) > out.at(i, j) + tol) out.antitone_in_k = false;

    if (cfg.run_direct) {
        auto direct = solve_bsde_backward(base, xi_fn, ensemble, cfg.solver);
        out.direct_y0 = direct.y0();
        out.gap_to_direct =
            std::abs(out.at(n_list.size() - 1, k_list.size() - 1) - out.direct_y0);
    }
    return out;
}

}  // namespace qbsde
