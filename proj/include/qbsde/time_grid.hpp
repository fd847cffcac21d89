#pragma once

#include <cmath>
#include <cstddef>

#include "qbsde/errors.hpp"

namespace qbsde {

/// Uniform discretization of [0, T] into N steps.
struct TimeGrid {
    double horizon = 1.0;
    long steps = 50;

    TimeGrid() = default;
    TimeGrid(double T, long N) : horizon(T), steps(N) {
        if (!(T > 0.0) || N < 1) throw InvalidConfig("invalid-config: TimeGrid needs T > 0, N >= 1");
    }

    double dt() const { return horizon / static_cast<double>(steps); }
    double node(long i) const { return horizon * static_cast<double>(i) / static_cast<double>(steps); }
    long num_nodes() const { return steps + 1; }

    /// Index of a node equal to t, or -1 when t is not on the grid.
    long index_of(double t) const {
        const double x = t / dt();
        const long i = static_cast<long>(std::llround(x));
        if (i < 0 || i > steps || std::abs(x - static_cast<double>(i)) > 1e-9) return -1;
        return i;
    }

    bool operator==(const TimeGrid&) const = default;
};

}  // namespace qbsde
