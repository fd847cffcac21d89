#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <tuple>
#include <vector>

#include "qbsde/class_i.hpp"
#include "qbsde/errors.hpp"
#include "qbsde/quadrature.hpp"

namespace qbsde {

enum class TransformKind { U, V };

/// Tabulated integral transform of a class-I coefficient function.
///
/// Kind U is the strictly increasing bijection
///     u(x) = integral_0^x exp(2 integral_0^y f) dy,
/// which absorbs the quadratic term of a purely quadratic driver. Kind V is
/// the nonnegative even companion
///     v(x) = integral_0^{|x|} u_minus(y) exp(2 integral_0^y f) dy,
/// with u_minus built from -f; it satisfies v'' - 2 f(|x|) |v'| = 1 away from
/// discontinuities of f.
///
/// Tables are immutable after construction and safe to share across threads.
class TransformTable {
public:
    TransformKind kind;
    std::vector<double> grid;    // strictly increasing abscissae
    std::vector<double> values;  // u(x_i) or v(x_i)
    std::vector<double> derivs;  // u'(x_i) or v'(x_i)
    double m_factor = 1.0;       // exp(2 integral |f|)
    std::string interpolation = "hermite-monotone";
    double tol = 1e-10;
    /// Worst defining-ODE residual observed at checkable interior nodes (kind V).
    double max_ode_residual = 0.0;

    double domain_lo() const { return grid.front(); }
    double domain_hi() const { return grid.back(); }
    double range_lo() const { return values.front(); }
    double range_hi() const { return values.back(); }

    /// Interpolated transform value at x (monotone-safe cubic Hermite).
    double eval(double x) const {
        const auto [i, t, h] = locate(x);
        return hermite(values[i], values[i + 1], slope_lo(i), slope_hi(i), t, h);
    }

    /// Interpolated derivative at x (linear between tabulated derivatives).
    double eval_deriv(double x) const {
        const auto [i, t, h] = locate(x);
        return derivs[i] + (derivs[i + 1] - derivs[i]) * t;
    }

private:
    std::tuple<std::size_t, double, double> locate(double x) const {
        if (x < grid.front() || x > grid.back())
            throw OutOfRange("transform eval outside table domain", grid.front(), grid.back());
        std::size_t i = static_cast<std::size_t>(
            std::upper_bound(grid.begin(), grid.end(), x) - grid.begin());
        i = std::clamp<std::size_t>(i, 1, grid.size() - 1) - 1;
        const double h = grid[i + 1] - grid[i];
        return {i, (x - grid[i]) / h, h};
    }

    // Fritsch-Carlson limiting keeps the cubic monotone on each panel.
    double limited(double d, double secant) const {
        if (secant == 0.0) return 0.0;
        const double r = d / secant;
        if (r < 0.0) return 0.0;
        return std::min(r, 3.0) * secant;
    }
    double secant(std::size_t i) const {
        return (values[i + 1] - values[i]) / (grid[i + 1] - grid[i]);
    }
    double slope_lo(std::size_t i) const { return limited(derivs[i], secant(i)); }
    double slope_hi(std::size_t i) const { return limited(derivs[i + 1], secant(i)); }

    static double hermite(double y0, double y1, double d0, double d1, double t, double h) {
        const double t2 = t * t;
        const double t3 = t2 * t;
        return y0 * (2 * t3 - 3 * t2 + 1) + y1 * (-2 * t3 + 3 * t2) +
               h * (d0 * (t3 - 2 * t2 + t) + d1 * (t3 - t2));
    }

    friend double invert_transform(const TransformTable&, double);
};

namespace detail {

inline std::vector<double> make_grid(Interval domain, std::size_t grid_size,
                                     std::span<const double> snap_points) {
    if (!(domain.lo < domain.hi)) throw InvalidConfig("transform domain: requires lo < hi");
    if (!(domain.lo <= 0.0 && 0.0 <= domain.hi))
        throw InvalidConfig("invalid-domain: transform domain must contain 0");
    if (grid_size < 3) throw InvalidConfig("transform grid_size must be >= 3");
    std::vector<double> g(grid_size);
    const double h = domain.width() / static_cast<double>(grid_size - 1);
    for (std::size_t i = 0; i < grid_size; ++i)
        g[i] = domain.lo + h * static_cast<double>(i);
    g.front() = domain.lo;
    g.back() = domain.hi;
    // Snap nodes onto the origin and onto declared kinks of f so that no
    // interpolation panel straddles a derivative jump.
    auto snap = [&](double p) {
        if (p <= domain.lo || p >= domain.hi) return;
        const std::size_t i = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround((p - domain.lo) / h)), 1, grid_size - 2);
        g[i] = p;
    };
    snap(0.0);
    for (double p : snap_points) snap(p);
    for (std::size_t i = 0; i + 1 < g.size(); ++i)
        if (!(g[i] < g[i + 1]))
            throw InvalidConfig("transform grid: breakpoints too dense for grid_size");
    return g;
}

/// Integral of f over [0, x_i] at every node, exact when f declares an
/// antiderivative and incremental adaptive quadrature otherwise.
inline std::vector<double> accumulate_from_zero(const ClassIFunction& f,
                                                const std::vector<double>& grid, double tol) {
    std::vector<double> phi(grid.size());
    if (f.antiderivative) {
        for (std::size_t i = 0; i < grid.size(); ++i) phi[i] = (*f.antiderivative)(grid[i]);
        return phi;
    }
    const std::size_t i0 = static_cast<std::size_t>(
        std::min_element(grid.begin(), grid.end(),
                         [](double a, double b) { return std::abs(a) < std::abs(b); }) -
        grid.begin());
    phi[i0] = integrate_or_throw(f.eval, 0.0, grid[i0], tol, f.breakpoints);
    for (std::size_t i = i0 + 1; i < grid.size(); ++i)
        phi[i] = phi[i - 1] + integrate_or_throw(f.eval, grid[i - 1], grid[i], tol, f.breakpoints);
    for (std::size_t i = i0; i-- > 0;)
        phi[i] = phi[i + 1] - integrate_or_throw(f.eval, grid[i], grid[i + 1], tol, f.breakpoints);
    return phi;
}

}  // namespace detail

/// Build the strictly increasing transform table for f on the given domain.
///
/// Node values are accumulated with adaptive Simpson quadrature, splitting at
/// the declared breakpoints of f; panel tolerances are set well below `tol`
/// so the per-node absolute error stays within it. Derivatives are
/// exp(2 integral_0^x f), evaluated through the (exact or quadrature)
/// antiderivative rather than by differencing.
inline TransformTable build_u_transform(const ClassIFunction& f, Interval domain,
                                        std::size_t grid_size = 2049, double tol = 1e-10) {
    f.validate();
    TransformTable t;
    t.kind = TransformKind::U;
    t.tol = tol;
    t.grid = detail::make_grid(domain, grid_size, f.breakpoints);
    t.m_factor = f.growth_factor();

    // Quadrature budget: keep accumulated error a couple of orders below tol.
    const double inner_tol = std::max(tol / (20.0 * static_cast<double>(grid_size)), 1e-16);
    const auto phi = detail::accumulate_from_zero(f, t.grid, inner_tol);

    t.derivs.resize(t.grid.size());
    for (std::size_t i = 0; i < t.grid.size(); ++i) t.derivs[i] = std::exp(2.0 * phi[i]);

    auto integrand = [&f, inner_tol](double anchor_x, double anchor_phi) {
        return [&f, inner_tol, anchor_x, anchor_phi](double y) {
            double p;
            if (f.antiderivative)
                p = (*f.antiderivative)(y);
            else
                p = anchor_phi + integrate_or_throw(f.eval, anchor_x, y, inner_tol, f.breakpoints);
            return std::exp(2.0 * p);
        };
    };

    t.values.assign(t.grid.size(), 0.0);
    const std::size_t i0 = static_cast<std::size_t>(
        std::find(t.grid.begin(), t.grid.end(), 0.0) - t.grid.begin());
    for (std::size_t i = i0 + 1; i < t.grid.size(); ++i) {
        t.values[i] = t.values[i - 1] +
                      integrate_or_throw(integrand(t.grid[i - 1], phi[i - 1]), t.grid[i - 1],
                                         t.grid[i], inner_tol, f.breakpoints);
    }
    for (std::size_t i = i0; i-- > 0;) {
        t.values[i] = t.values[i + 1] -
                      integrate_or_throw(integrand(t.grid[i], phi[i]), t.grid[i], t.grid[i + 1],
                                         inner_tol, f.breakpoints);
    }

    // Construction-time invariants: strict monotonicity plus the envelope
    //   |x|/M <= |u(x)| <= M|x|,  1/M <= u' <= M.
    const double slack = 1.0 + 1e-9 + 10.0 * tol;
    for (std::size_t i = 0; i + 1 < t.grid.size(); ++i) {
        if (!(t.values[i + 1] > t.values[i]))
            throw Error("u-transform: tabulated values not strictly increasing");
    }
    for (std::size_t i = 0; i < t.grid.size(); ++i) {
        const double x = t.grid[i];
        if (t.derivs[i] > t.m_factor * slack || t.derivs[i] < 1.0 / (t.m_factor * slack))
            throw Error("u-transform: derivative escaped the declared envelope");
        if (x != 0.0) {
            const double ratio = std::abs(t.values[i]) / std::abs(x);
            if (ratio > t.m_factor * slack || ratio < 1.0 / (t.m_factor * slack))
                throw Error("u-transform: value escaped the declared envelope");
        }
    }
    return t;
}

/// Build the nonnegative even transform table for f on the given domain.
///
/// After construction the defining ODE residual v'' - 2 f(|x|)|v'| - 1 is
/// evaluated at interior nodes whose finite-difference stencil stays clear of
/// breakpoints of f(|.|) and of the origin; the worst residual is recorded
/// and must not exceed 10 * tol.
inline TransformTable build_v_transform(const ClassIFunction& f, Interval domain,
                                        std::size_t grid_size = 2049, double tol = 1e-10) {
    f.validate();
    TransformTable t;
    t.kind = TransformKind::V;
    t.tol = tol;
    std::vector<double> mirrored;
    for (double b : f.breakpoints) {
        mirrored.push_back(std::abs(b));
        mirrored.push_back(-std::abs(b));
    }
    t.grid = detail::make_grid(domain, grid_size, mirrored);
    t.m_factor = f.growth_factor();

    const double inner_tol = std::max(tol / (20.0 * static_cast<double>(grid_size)), 1e-16);

    // Work on the sorted distinct |x_i| values; v(x_i) = V(|x_i|).
    std::vector<double> radii(t.grid.size());
    for (std::size_t i = 0; i < t.grid.size(); ++i) radii[i] = std::abs(t.grid[i]);
    std::vector<double> sorted = radii;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    const auto phi_at = [&f, inner_tol](double y, double anchor_x, double anchor_phi) {
        if (f.antiderivative) return (*f.antiderivative)(y);
        return anchor_phi + integrate_or_throw(f.eval, anchor_x, y, inner_tol, f.breakpoints);
    };

    // Incremental passes over the radius list: phi(r), then the companion
    // A(r) = integral_0^r exp(-2 phi), then V(r) with integrand A * exp(2 phi).
    std::vector<double> phi(sorted.size()), comp(sorted.size()), vv(sorted.size());
    double prev_r = 0.0, prev_phi = 0.0, prev_comp = 0.0, prev_v = 0.0;
    for (std::size_t j = 0; j < sorted.size(); ++j) {
        const double r = sorted[j];
        phi[j] = phi_at(r, prev_r, prev_phi);
        comp[j] = prev_comp + integrate_or_throw(
                                  [&](double y) { return std::exp(-2.0 * phi_at(y, prev_r, prev_phi)); },
                                  prev_r, r, inner_tol, f.breakpoints);
        const double anchor_phi = prev_phi, anchor_comp = prev_comp, anchor_r = prev_r;
        vv[j] = prev_v + integrate_or_throw(
                             [&](double y) {
                                 const double p = phi_at(y, anchor_r, anchor_phi);
                                 const double a =
                                     anchor_comp +
                                     integrate_or_throw(
                                         [&](double w) {
                                             return std::exp(-2.0 * phi_at(w, anchor_r, anchor_phi));
                                         },
                                         anchor_r, y, inner_tol, f.breakpoints);
                                 return a * std::exp(2.0 * p);
                             },
                             prev_r, r, inner_tol, f.breakpoints);
        prev_r = r;
        prev_phi = phi[j];
        prev_comp = comp[j];
        prev_v = vv[j];
    }

    const auto radius_index = [&sorted](double r) {
        return static_cast<std::size_t>(
            std::lower_bound(sorted.begin(), sorted.end(), r) - sorted.begin());
    };
    t.values.resize(t.grid.size());
    t.derivs.resize(t.grid.size());
    for (std::size_t i = 0; i < t.grid.size(); ++i) {
        const std::size_t j = radius_index(radii[i]);
        t.values[i] = vv[j];
        const double vp = comp[j] * std::exp(2.0 * phi[j]);
        t.derivs[i] = (t.grid[i] >= 0.0 ? vp : -vp);
    }

    // Envelope checks:  x^2/(2M^2) <= v <= M^2 x^2 / 2,  |x|/M^2 <= |v'| <= M^2 |x|.
    const double m2 = t.m_factor * t.m_factor;
    const double slack = 1.0 + 1e-9 + 10.0 * tol;
    for (std::size_t i = 0; i < t.grid.size(); ++i) {
        const double x = t.grid[i];
        if (t.values[i] < -tol) throw Error("v-transform: negative tabulated value");
        if (x != 0.0) {
            if (t.values[i] > slack * m2 * x * x / 2.0 ||
                t.values[i] < x * x / (2.0 * m2 * slack) - tol)
                throw Error("v-transform: value escaped the declared envelope");
            const double d = std::abs(t.derivs[i]) / std::abs(x);
            if (d > m2 * slack || d < 1.0 / (m2 * slack))
                throw Error("v-transform: derivative escaped the declared envelope");
        }
    }

    // Defining-ODE residual via a 7-point first-derivative stencil on the
    // tabulated v'. Nodes whose stencil straddles the origin, a breakpoint of
    // f(|.|), or a (non-uniform) snapped panel are skipped.
    const double h = (t.grid.back() - t.grid.front()) / static_cast<double>(t.grid.size() - 1);
    auto near_kink = [&](double x) {
        if (std::abs(x) < 4.0 * h) return true;
        for (double b : f.breakpoints)
            if (std::abs(std::abs(x) - std::abs(b)) < 4.0 * h) return true;
        return false;
    };
    t.max_ode_residual = 0.0;
    for (std::size_t i = 3; i + 3 < t.grid.size(); ++i) {
        if (near_kink(t.grid[i])) continue;
        bool uniform = true;
        for (std::size_t j = i - 3; j < i + 3; ++j)
            if (std::abs((t.grid[j + 1] - t.grid[j]) - h) > 1e-9 * h) uniform = false;
        if (!uniform) continue;
        const double vpp = (-t.derivs[i - 3] + 9.0 * t.derivs[i - 2] - 45.0 * t.derivs[i - 1] +
                            45.0 * t.derivs[i + 1] - 9.0 * t.derivs[i + 2] + t.derivs[i + 3]) /
                           (60.0 * h);
        const double resid =
            std::abs(vpp - 2.0 * f.eval(std::abs(t.grid[i])) * std::abs(t.derivs[i]) - 1.0);
        t.max_ode_residual = std::max(t.max_ode_residual, resid);
    }
    if (t.max_ode_residual > 10.0 * tol)
        throw QuadratureFailure("v-transform: ODE residual exceeds 10*tol", t.max_ode_residual);
    return t;
}

/// Invert a kind-U table: the x with |u(x) - y| <= table.tol, by bracketed
/// root-finding (Newton on the monotone interpolant with bisection fallback).
inline double invert_transform(const TransformTable& table, double y) {
    if (table.kind != TransformKind::U)
        throw InvalidConfig("invert_transform: only kind-U tables are invertible");
    if (y < table.range_lo() || y > table.range_hi())
        throw OutOfRange("invert_transform: value outside table range", table.range_lo(),
                         table.range_hi());
    const auto& vals = table.values;
    std::size_t i = static_cast<std::size_t>(
        std::upper_bound(vals.begin(), vals.end(), y) - vals.begin());
    i = std::clamp<std::size_t>(i, 1, vals.size() - 1) - 1;
    double lo = table.grid[i], hi = table.grid[i + 1];
    double x = lo + (hi - lo) * (y - vals[i]) / (vals[i + 1] - vals[i]);
    for (int iter = 0; iter < 100; ++iter) {
        const double fx = table.eval(x) - y;
        if (std::abs(fx) <= table.tol) return x;
        if (fx > 0.0)
            hi = x;
        else
            lo = x;
        const double d = table.eval_deriv(x);
        double step = (d > 0.0) ? x - fx / d : std::numeric_limits<double>::quiet_NaN();
        x = (std::isfinite(step) && step > lo && step < hi) ? step : 0.5 * (lo + hi);
    }
    return x;
}

}  // namespace qbsde
