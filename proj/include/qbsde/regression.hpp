#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "qbsde/errors.hpp"
#include "qbsde/rng.hpp"
#include "qbsde/time_grid.hpp"

namespace qbsde {

/// Basis for least-squares conditional expectations: all monomials of total
/// degree <= degree over the selected coordinates (all coordinates when
/// `coords` is empty), optionally augmented with exp(+s x) and exp(-s x) of
/// each selected raw coordinate for every scale s in `exp_scales`. Polynomial
/// features are standardized; exp features act on the raw coordinate so that
/// exponential-family targets stay inside the span under one-step
/// conditioning.
struct BasisSpec {
    int degree = 4;
    std::vector<int> coords;
    std::vector<double> exp_scales;

    BasisSpec() = default;
    explicit BasisSpec(int deg, std::vector<int> selected = {},
                       std::vector<double> scales = {})
        : degree(deg), coords(std::move(selected)), exp_scales(std::move(scales)) {}
};

namespace detail {

inline void enumerate_powers(int dims, int degree, std::vector<int>& current,
                             std::vector<std::vector<int>>& out) {
    if (static_cast<int>(current.size()) == dims) {
        out.push_back(current);
        return;
    }
    for (int p = 0; p <= degree; ++p) {
        current.push_back(p);
        enumerate_powers(dims, degree - p, current, out);
        current.pop_back();
    }
}

/// Householder QR least squares on a column-major matrix; returns coefficients
/// and the ratio of extreme |R_ii| as a condition estimate.
struct QrResult {
    std::vector<double> coeffs;
    double condition = 1.0;
    double min_diag = 0.0;
    double max_diag = 0.0;
};

inline QrResult householder_solve(std::vector<double>& a, long rows, long cols,
                                  std::vector<double>& rhs) {
    std::vector<double> beta(cols);
    for (long j = 0; j < cols; ++j) {
        double* col = &a[static_cast<std::size_t>(j) * rows];
        double norm = 0.0;
        for (long i = j; i < rows; ++i) norm += col[i] * col[i];
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            beta[j] = 0.0;
            continue;
        }
        const double alpha = col[j] >= 0.0 ? -norm : norm;
        const double v0 = col[j] - alpha;
        col[j] = alpha;
        // Householder vector stored below the diagonal, scaled by v0.
        for (long i = j + 1; i < rows; ++i) col[i] /= v0;
        beta[j] = -v0 / alpha;
        for (long k = j + 1; k < cols; ++k) {
            double* ck = &a[static_cast<std::size_t>(k) * rows];
            double dot = ck[j];
            for (long i = j + 1; i < rows; ++i) dot += col[i] * ck[i];
            dot *= beta[j];
            ck[j] -= dot;
            for (long i = j + 1; i < rows; ++i) ck[i] -= dot * col[i];
        }
        double dot = rhs[j];
        for (long i = j + 1; i < rows; ++i) dot += col[i] * rhs[i];
        dot *= beta[j];
        rhs[j] -= dot;
        for (long i = j + 1; i < rows; ++i) rhs[i] -= dot * col[i];
    }
    QrResult r;
    r.max_diag = 0.0;
    r.min_diag = std::numeric_limits<double>::infinity();
    for (long j = 0; j < cols; ++j) {
        const double d = std::abs(a[static_cast<std::size_t>(j) * rows + j]);
        r.max_diag = std::max(r.max_diag, d);
        r.min_diag = std::min(r.min_diag, d);
    }
    r.condition = r.min_diag > 0.0 ? r.max_diag / r.min_diag
                                   : std::numeric_limits<double>::infinity();
    r.coeffs.assign(cols, 0.0);
    for (long j = cols - 1; j >= 0; --j) {
        double s = rhs[j];
        for (long k = j + 1; k < cols; ++k)
            s -= a[static_cast<std::size_t>(k) * rows + j] * r.coeffs[k];
        const double d = a[static_cast<std::size_t>(j) * rows + j];
        r.coeffs[j] = d != 0.0 ? s / d : 0.0;
    }
    return r;
}

}  // namespace detail

/// Fitted least-squares model of E[target | features]. Immutable after the
/// fit; prediction is thread-safe.
class RegressionModel {
public:
    BasisSpec basis;
    std::vector<double> coefficients;
    double residual_rms = 0.0;
    double condition_estimate = 1.0;

    double predict(std::span<const double> features) const {
        expand_row(features, scratch());
        const auto& row = scratch();
        double y = 0.0;
        for (std::size_t b = 0; b < row.size(); ++b) y += coefficients[b] * row[b];
        if (clamp_range) y = std::clamp(y, clamp_range->first, clamp_range->second);
        return y;
    }

    long num_basis_functions() const { return static_cast<long>(powers_.size()) + num_exp_; }

private:
    friend RegressionModel fit_condexp(std::span<const double>, long, int,
                                       std::span<const double>, const BasisSpec&, double, bool);

    std::vector<int> active_;            // selected, non-degenerate coordinates
    std::vector<double> center_, scale_; // standardization per active coordinate
    std::vector<std::vector<int>> powers_;
    int num_exp_ = 0;
    std::optional<std::pair<double, double>> clamp_range;

    // Per-thread scratch row keeps predict() allocation-free and re-entrant.
    std::vector<double>& scratch() const {
        thread_local std::vector<double> row;
        row.resize(powers_.size() + static_cast<std::size_t>(num_exp_));
        return row;
    }

    void expand_row(std::span<const double> x, std::vector<double>& row) const {
        const std::size_t k = active_.size();
        double std_coord[16];
        for (std::size_t j = 0; j < k; ++j)
            std_coord[j] = (x[static_cast<std::size_t>(active_[j])] - center_[j]) / scale_[j];
        for (std::size_t b = 0; b < powers_.size(); ++b) {
            double v = 1.0;
            for (std::size_t j = 0; j < k; ++j) {
                const int p = powers_[b][j];
                for (int q = 0; q < p; ++q) v *= std_coord[j];
            }
            row[b] = v;
        }
        std::size_t slot = powers_.size();
        for (double s : basis.exp_scales) {
            for (std::size_t j = 0; j < k; ++j) {
                const double raw = x[static_cast<std::size_t>(active_[j])];
                row[slot++] = std::exp(s * raw);
                row[slot++] = std::exp(-s * raw);
            }
        }
    }
};

/// Least-squares fit of targets on the expanded feature basis, minimizing
/// sum (target - model)^2 + ridge * |coeff|^2 through an orthogonal
/// decomposition (polynomial bases are ill-conditioned, and the condition
/// number must be reported).
///
/// `features` is row-major M x n. Coordinates with (numerically) zero sample
/// variance are excluded from the expansion, which reduces the model to the
/// constant fit when every coordinate is degenerate.
inline RegressionModel fit_condexp(std::span<const double> features, long num_rows, int dim,
                                   std::span<const double> targets, const BasisSpec& basis,
                                   double ridge = 0.0, bool clamp_to_target_range = false) {
    if (num_rows != static_cast<long>(targets.size()))
        throw InvalidConfig("fit_condexp: features/targets row mismatch");
    for (double t : targets)
        if (!std::isfinite(t)) throw InvalidConfig("fit_condexp: non-finite target");

    RegressionModel model;
    model.basis = basis;

    std::vector<int> selected = basis.coords;
    if (selected.empty())
        for (int j = 0; j < dim; ++j) selected.push_back(j);
    if (selected.size() > 16) throw InvalidConfig("fit_condexp: at most 16 coordinates");

    // Standardization; degenerate coordinates are dropped.
    for (int j : selected) {
        if (j < 0 || j >= dim) throw InvalidConfig("fit_condexp: coordinate out of range");
        double mean = 0.0;
        for (long i = 0; i < num_rows; ++i)
            mean += features[static_cast<std::size_t>(i) * dim + j];
        mean /= static_cast<double>(num_rows);
        double var = 0.0;
        for (long i = 0; i < num_rows; ++i) {
            const double d = features[static_cast<std::size_t>(i) * dim + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(std::max<long>(1, num_rows - 1));
        const double sd = std::sqrt(var);
        if (sd > 1e-12 * (1.0 + std::abs(mean))) {
            model.active_.push_back(j);
            model.center_.push_back(mean);
            model.scale_.push_back(sd);
        }
    }

    std::vector<int> current;
    detail::enumerate_powers(static_cast<int>(model.active_.size()), basis.degree, current,
                             model.powers_);
    model.num_exp_ =
        2 * static_cast<int>(basis.exp_scales.size()) * static_cast<int>(model.active_.size());
    const long B = model.num_basis_functions();
    if (num_rows <= B)
        throw InvalidConfig("underdetermined: need more samples than basis functions");

    const long rows = num_rows + (ridge > 0.0 ? B : 0);
    std::vector<double> a(static_cast<std::size_t>(rows) * B, 0.0);
    std::vector<double> rhs(rows, 0.0);
    {
        std::vector<double> row(static_cast<std::size_t>(B));
        for (long i = 0; i < num_rows; ++i) {
            model.expand_row(features.subspan(static_cast<std::size_t>(i) * dim,
                                              static_cast<std::size_t>(dim)),
                             row);
            for (long b = 0; b < B; ++b) a[static_cast<std::size_t>(b) * rows + i] = row[b];
            rhs[i] = targets[i];
        }
    }
    if (ridge > 0.0) {
        const double s = std::sqrt(ridge);
        for (long b = 0; b < B; ++b)
            a[static_cast<std::size_t>(b) * rows + num_rows + b] = s;
    }

    auto qr = detail::householder_solve(a, rows, B, rhs);
    if (ridge <= 0.0 && (qr.min_diag == 0.0 || qr.condition > 1e13))
        throw SingularDesign(
            "singular-design: rank-deficient normal system; consider a ridge penalty");
    model.coefficients = std::move(qr.coeffs);
    model.condition_estimate = qr.condition;
    for (double c : model.coefficients)
        if (!std::isfinite(c)) throw SingularDesign("singular-design: non-finite coefficients");

    double ss = 0.0;
    {
        std::vector<double> row(static_cast<std::size_t>(B));
        for (long i = 0; i < num_rows; ++i) {
            model.expand_row(features.subspan(static_cast<std::size_t>(i) * dim,
                                              static_cast<std::size_t>(dim)),
                             row);
            double y = 0.0;
            for (long b = 0; b < B; ++b) y += model.coefficients[b] * row[b];
            const double r = targets[i] - y;
            ss += r * r;
        }
    }
    model.residual_rms = std::sqrt(ss / static_cast<double>(num_rows));

    if (clamp_to_target_range) {
        auto [lo, hi] = std::minmax_element(targets.begin(), targets.end());
        model.clamp_range = {*lo, *hi};
    }
    return model;
}

/// Plain nested Monte Carlo estimate of E[terminal_fn(W_T) | W_t = w] by a
/// fresh Gaussian sub-simulation. Slow oracle used to validate the regression
/// path; never called by the solvers themselves.
struct OracleEstimate {
    double value = 0.0;
    double std_error = 0.0;
    long samples = 0;
};

inline OracleEstimate oracle_condexp_brownian(const std::function<double(double)>& terminal_fn,
                                              double t, double horizon, double w_t,
                                              long inner_paths, std::uint64_t seed) {
    if (inner_paths < 100)
        throw InvalidConfig("invalid-config: oracle needs at least 100 inner paths");
    const double sd = std::sqrt(std::max(0.0, horizon - t));
    double sum = 0.0, sq = 0.0;
    for (long i = 0; i < inner_paths; ++i) {
        const double z = normal_draw(seed, static_cast<std::uint64_t>(i), 0xFFFFFFFFu, 0);
        const double v = terminal_fn(w_t + sd * z);
        if (!std::isfinite(v)) throw InvalidConfig("invalid-payoff: non-finite terminal value");
        sum += v;
        sq += v * v;
    }
    OracleEstimate out;
    out.samples = inner_paths;
    out.value = sum / static_cast<double>(inner_paths);
    const double var =
        std::max(0.0, sq / static_cast<double>(inner_paths) - out.value * out.value);
    out.std_error = std::sqrt(var / static_cast<double>(inner_paths));
    return out;
}

}  // namespace qbsde
