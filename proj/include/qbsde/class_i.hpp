#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qbsde/errors.hpp"
#include "qbsde/quadrature.hpp"

namespace qbsde {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double x) const { return x >= lo && x <= hi; }
    double width() const { return hi - lo; }
};

/// A coefficient function of the integrable-on-the-line, bounded-on-compacts
/// class that parameterizes the quadratic term f(|y|)|z|^2.
///
/// `total_abs_integral` is the full-line integral of |f|. For compactly
/// supported pieces it is computed at construction; for analytically tailed
/// functions the caller must declare it (the library refuses to estimate
/// tails numerically, since a silently truncated tail would corrupt the
/// growth factor exp(2 * total_abs_integral)).
struct ClassIFunction {
    std::function<double(double)> eval;
    double total_abs_integral = 0.0;
    /// Declared discontinuities / kinks; quadrature panels split here.
    std::vector<double> breakpoints;
    /// Outside this interval f is identically zero (or analytically tailed).
    std::optional<Interval> support_hint;
    /// sup |f| over a queried compact interval.
    std::function<double(const Interval&)> compact_bound;
    /// Exact antiderivative x -> integral of f over [0, x], when available.
    std::optional<std::function<double(double)>> antiderivative;

    /// Growth factor exp(2 * integral |f|) of the transform envelope; always in [1, inf).
    double growth_factor() const { return std::exp(2.0 * total_abs_integral); }

    /// Integral of f over [0, x]: exact when an antiderivative is declared,
    /// adaptive quadrature otherwise.
    double integral_from_zero(double x, double tol = 1e-13) const {
        if (antiderivative) return (*antiderivative)(x);
        return integrate_or_throw(eval, 0.0, x, tol, breakpoints);
    }

    /// Spot-check the declared invariants on a sample grid; throws on failure.
    void validate() const {
        if (!eval) throw InvalidConfig("ClassIFunction: eval not set");
        if (!std::isfinite(total_abs_integral) || total_abs_integral < 0.0)
            throw InvalidConfig("ClassIFunction: total_abs_integral must be finite and >= 0");
        if (compact_bound) {
            const Interval probe{-4.0, 4.0};
            const double bound = compact_bound(probe);
            for (int i = 0; i <= 64; ++i) {
                const double x = probe.lo + probe.width() * i / 64.0;
                if (std::abs(eval(x)) > bound * (1.0 + 1e-12) + 1e-12)
                    throw InvalidConfig("ClassIFunction: compact_bound violated at sample point");
            }
        }
    }
};

namespace classi {

/// f identically zero.
inline ClassIFunction zero() {
    ClassIFunction f;
    f.eval = [](double) { return 0.0; };
    f.total_abs_integral = 0.0;
    f.support_hint = Interval{0.0, 0.0};
    f.compact_bound = [](const Interval&) { return 0.0; };
    f.antiderivative = [](double) { return 0.0; };
    return f;
}

namespace detail {
/// Integral of the indicator of [a, b] over [0, x], signed in x.
inline double clipped_length(double a, double b, double x) {
    const double lo = std::min(0.0, x);
    const double hi = std::max(0.0, x);
    const double len = std::max(0.0, std::min(b, hi) - std::max(a, lo));
    return x >= 0.0 ? len : -len;
}
}  // namespace detail

/// f = c * indicator([a, b]).
inline ClassIFunction constant_indicator(double c, double a, double b) {
    if (!(a < b)) throw InvalidConfig("constant_indicator: requires a < b");
    ClassIFunction f;
    f.eval = [c, a, b](double x) { return (x >= a && x <= b) ? c : 0.0; };
    f.total_abs_integral = std::abs(c) * (b - a);
    f.breakpoints = {a, b};
    f.support_hint = Interval{a, b};
    f.compact_bound = [c](const Interval&) { return std::abs(c); };
    f.antiderivative = [c, a, b](double x) { return c * detail::clipped_length(a, b, x); };
    return f;
}

/// f = sin(y) * indicator([a, b]).
inline ClassIFunction sin_indicator(double a, double b) {
    if (!(a < b)) throw InvalidConfig("sin_indicator: requires a < b");
    ClassIFunction f;
    f.eval = [a, b](double x) { return (x >= a && x <= b) ? std::sin(x) : 0.0; };
    // Antiderivative of sin over [0,x] clipped to [a,b]:
    //   integral_{[0,x] cap [a,b]} sin = cos(clip lo) - cos(clip hi), signed.
    f.antiderivative = [a, b](double x) {
        const double lo = std::max(a, std::min(0.0, x));
        const double hi = std::min(b, std::max(0.0, x));
        if (lo >= hi) return 0.0;
        const double v = std::cos(lo) - std::cos(hi);
        return x >= 0.0 ? v : -v;
    };
    f.breakpoints = {a, b};
    f.support_hint = Interval{a, b};
    f.compact_bound = [](const Interval&) { return 1.0; };
    // Compactly supported: integral of |sin| computed here once, splitting at
    // the sign changes k*pi inside [a, b].
    std::vector<double> kinks = {a, b};
    const double pi = 3.14159265358979323846;
    for (long k = static_cast<long>(std::ceil(a / pi)); k * pi < b; ++k)
        kinks.push_back(static_cast<double>(k) * pi);
    f.total_abs_integral = integrate_or_throw(
        [a, b](double x) { return (x >= a && x <= b) ? std::abs(std::sin(x)) : 0.0; }, a, b,
        1e-14, kinks);
    return f;
}

/// Arbitrary function with caller-declared integrability metadata. The
/// full-line integral of |f| must be supplied analytically.
inline ClassIFunction declared(std::function<double(double)> fn, double total_abs_integral,
                               std::vector<double> breakpoints = {},
                               std::function<double(const Interval&)> bound = {}) {
    ClassIFunction f;
    f.eval = std::move(fn);
    f.total_abs_integral = total_abs_integral;
    f.breakpoints = std::move(breakpoints);
    if (bound) f.compact_bound = std::move(bound);
    f.validate();
    return f;
}

/// Pointwise sum. The declared integral of the sum's absolute value is the
/// (possibly conservative) triangle-inequality bound; exact for pieces with
/// disjoint supports.
inline ClassIFunction sum(const ClassIFunction& f, const ClassIFunction& g) {
    ClassIFunction h;
    auto fe = f.eval;
    auto ge = g.eval;
    h.eval = [fe, ge](double x) { return fe(x) + ge(x); };
    h.total_abs_integral = f.total_abs_integral + g.total_abs_integral;
    h.breakpoints = f.breakpoints;
    h.breakpoints.insert(h.breakpoints.end(), g.breakpoints.begin(), g.breakpoints.end());
    if (f.support_hint && g.support_hint) {
        h.support_hint = Interval{std::min(f.support_hint->lo, g.support_hint->lo),
                                  std::max(f.support_hint->hi, g.support_hint->hi)};
    }
    if (f.compact_bound && g.compact_bound) {
        auto fb = f.compact_bound;
        auto gb = g.compact_bound;
        h.compact_bound = [fb, gb](const Interval& k) { return fb(k) + gb(k); };
    }
    if (f.antiderivative && g.antiderivative) {
        auto fa = *f.antiderivative;
        auto ga = *g.antiderivative;
        h.antiderivative = [fa, ga](double x) { return fa(x) + ga(x); };
    }
    return h;
}

/// Difference of two indicators, 1_[a,b] - 1_[c,d].
inline ClassIFunction indicator_difference(double a, double b, double c, double d) {
    return sum(constant_indicator(1.0, a, b), constant_indicator(-1.0, c, d));
}

/// Rational decay scale/(1+y^2)^2: an integrable piece with an analytic
/// full-line integral of scale * pi/2.
inline ClassIFunction rational_decay(double scale = 1.0) {
    const double pi = 3.14159265358979323846;
    ClassIFunction f;
    f.eval = [scale](double y) { return scale / ((1.0 + y * y) * (1.0 + y * y)); };
    f.total_abs_integral = std::abs(scale) * pi / 2.0;
    f.compact_bound = [scale](const Interval&) { return std::abs(scale); };
    f.antiderivative = [scale](double x) {
        return scale * 0.5 * (std::atan(x) + x / (1.0 + x * x));
    };
    return f;
}

/// Named built-ins for the coefficient examples used throughout the drivers.
inline ClassIFunction named(const std::string& name) {
    const double pi = 3.14159265358979323846;
    if (name == "zero") return zero();
    if (name == "half-indicator") return constant_indicator(0.5, 0.0, 1.0);
    if (name == "sin-half-period") return sin_indicator(-pi, pi / 2.0);
    if (name == "indicator-diff") return indicator_difference(0.0, 1.0, 2.0, 3.0);
    if (name == "rational-decay") return rational_decay();
    throw InvalidConfig("unknown class-I built-in '" + name + "'");
}

/// f composed with |.|: y -> f(|y|). This is the coefficient shape the growth
/// conditions use. Breakpoints are mirrored; the integral doubles the
/// positive-side mass, which is exact when f vanishes on (-inf, 0).
inline ClassIFunction compose_abs(const ClassIFunction& f, double positive_abs_integral) {
    ClassIFunction h;
    auto fe = f.eval;
    h.eval = [fe](double x) { return fe(std::abs(x)); };
    h.total_abs_integral = 2.0 * positive_abs_integral;
    for (double b : f.breakpoints) {
        h.breakpoints.push_back(b);
        h.breakpoints.push_back(-b);
    }
    if (f.compact_bound) {
        auto fb = f.compact_bound;
        h.compact_bound = [fb](const Interval& k) {
            const double m = std::max(std::abs(k.lo), std::abs(k.hi));
            return fb(Interval{0.0, m});
        };
    }
    if (f.antiderivative) {
        auto fa = *f.antiderivative;
        h.antiderivative = [fa](double x) {
            const double v = fa(std::abs(x)) - fa(0.0);
            return x >= 0.0 ? v : -v;
        };
    }
    return h;
}

}  // namespace classi
}  // namespace qbsde
