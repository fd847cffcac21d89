#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "qbsde/errors.hpp"

namespace qbsde {

struct QuadratureResult {
    double value = 0.0;
    double error_estimate = 0.0;
    long evaluations = 0;
    bool converged = true;
};

namespace detail {

/// One adaptive Simpson panel. whole = S(a,b) with endpoint/midpoint values cached.
template <typename F>
QuadratureResult adaptive_simpson_panel(const F& f, double a, double fa, double b, double fb,
                                        double m, double fm, double whole, double tol,
                                        int depth) {
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    // Richardson: |S2 - S1| <= 15 * actual error of S2.
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        return {left + right + delta / 15.0, std::abs(delta) / 15.0, 2, depth > 0};
    }
    auto l = adaptive_simpson_panel(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1);
    auto r = adaptive_simpson_panel(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
    return {l.value + r.value, l.error_estimate + r.error_estimate,
            l.evaluations + r.evaluations + 2, l.converged && r.converged};
}

template <typename F>
QuadratureResult adaptive_simpson_interval(const F& f, double a, double b, double tol,
                                           int max_depth) {
    if (a == b) return {0.0, 0.0, 0, true};
    const double m = 0.5 * (a + b);
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(m);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    auto r = adaptive_simpson_panel(f, a, fa, b, fb, m, fm, whole, tol, max_depth);
    r.evaluations += 3;
    return r;
}

}  // namespace detail

/// Adaptive Simpson quadrature of f over [a, b] (a <= b or a > b, signed) with
/// absolute tolerance `tol`. Panels are pre-split at the given breakpoints so
/// that discontinuities of f land on panel edges.
template <typename F>
QuadratureResult integrate(const F& f, double a, double b, double tol,
                           std::span<const double> breakpoints = {}, int max_depth = 48) {
    double sign = 1.0;
    if (a > b) {
        std::swap(a, b);
        sign = -1.0;
    }
    std::vector<double> cuts;
    cuts.push_back(a);
    for (double c : breakpoints) {
        if (c > a && c < b) cuts.push_back(c);
    }
    cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    const double panel_tol = tol / static_cast<double>(cuts.size() - 1);
    QuadratureResult total;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        auto r = detail::adaptive_simpson_interval(f, cuts[i], cuts[i + 1], panel_tol, max_depth);
        total.value += r.value;
        total.error_estimate += r.error_estimate;
        total.evaluations += r.evaluations;
        total.converged = total.converged && r.converged;
    }
    total.value *= sign;
    return total;
}

/// Like integrate() but throws QuadratureFailure when the iteration cap is hit
/// before reaching the tolerance.
template <typename F>
double integrate_or_throw(const F& f, double a, double b, double tol,
                          std::span<const double> breakpoints = {}, int max_depth = 48) {
    auto r = integrate(f, a, b, tol, breakpoints, max_depth);
    if (!r.converged && r.error_estimate > tol) {
        throw QuadratureFailure("adaptive quadrature did not converge", r.error_estimate);
    }
    return r.value;
}

/// Brute-force composite Simpson with a fixed panel count. Test oracle; no
/// adaptivity, no breakpoint handling beyond what `panels` resolves.
template <typename F>
double composite_simpson(const F& f, double a, double b, long panels) {
    if (panels % 2 != 0) ++panels;
    const double h = (b - a) / static_cast<double>(panels);
    double acc = f(a) + f(b);
    for (long i = 1; i < panels; ++i) {
        acc += f(a + h * static_cast<double>(i)) * ((i % 2 != 0) ? 4.0 : 2.0);
    }
    return acc * h / 3.0;
}

}  // namespace qbsde
