#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace qbsde {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad user input: domains, grids, counts, config fields.
class InvalidConfig : public Error {
public:
    explicit InvalidConfig(const std::string& msg) : Error(msg) {}
};

/// Adaptive quadrature did not reach the requested tolerance.
class QuadratureFailure : public Error {
public:
    QuadratureFailure(const std::string& msg, double achieved)
        : Error(msg + " (achieved error " + std::to_string(achieved) + ")"),
          achieved_error(achieved) {}
    double achieved_error;
};

/// Query outside the invertible range of a transform table.
class OutOfRange : public Error {
public:
    OutOfRange(const std::string& msg, double lo, double hi)
        : Error(msg + " (admissible interval [" + std::to_string(lo) + ", " +
                std::to_string(hi) + "])"),
          range_lo(lo), range_hi(hi) {}
    double range_lo;
    double range_hi;
};

/// Least-squares design matrix is rank deficient with no ridge.
class SingularDesign : public Error {
public:
    explicit SingularDesign(const std::string& msg) : Error(msg) {}
};

/// Iterative solve diverged at a specific backward step.
class StepDivergence : public Error {
public:
    StepDivergence(const std::string& msg, long step)
        : Error(msg + " (step " + std::to_string(step) + ")"), step_index(step) {}
    long step_index;
};

/// Non-finite values produced while stepping.
class NumericalBlowup : public Error {
public:
    NumericalBlowup(const std::string& msg, long step)
        : Error(msg + " (step " + std::to_string(step) + ")"), step_index(step) {}
    long step_index;
};

/// Picard iteration distances grew instead of contracting.
class ContractionFailure : public Error {
public:
    ContractionFailure(const std::string& msg, std::vector<double> trace)
        : Error(msg), distance_trace(std::move(trace)) {}
    std::vector<double> distance_trace;
};

/// Regression prediction of a quantity that must stay positive went nonpositive.
class PositivityViolation : public Error {
public:
    explicit PositivityViolation(const std::string& msg) : Error(msg) {}
};

/// Two solutions compared on different ensembles.
class IncompatibleSolutions : public Error {
public:
    explicit IncompatibleSolutions(const std::string& msg) : Error(msg) {}
};

}  // namespace qbsde
