#pragma once

#include <stdexcept>
#include <string>

namespace pfq {

// Errors fall into two classes that the command line maps to exit codes:
// caller mistakes (bad inputs, violated preconditions) exit with 1,
// numerical breakdowns exit with 2.
enum class ErrorClass { Precondition, Numerical };

class Error : public std::runtime_error {
public:
    Error(ErrorClass cls, std::string kind, const std::string& what)
        : std::runtime_error(what), class_(cls), kind_(std::move(kind)) {}

    ErrorClass error_class() const noexcept { return class_; }
    const std::string& kind() const noexcept { return kind_; }

private:
    ErrorClass class_;
    std::string kind_;
};

struct DomainError : Error {
    explicit DomainError(const std::string& what) : Error(ErrorClass::Precondition, "domain", what) {}
};

struct PreconditionError : Error {
    explicit PreconditionError(const std::string& what)
        : Error(ErrorClass::Precondition, "precondition", what) {}
};

struct UnsupportedFamilyError : Error {
    explicit UnsupportedFamilyError(const std::string& what)
        : Error(ErrorClass::Precondition, "unsupported_family", what) {}
};

// W_{-1} argument left (-1/e, 0): the bound being evaluated carries no information.
struct BoundVacuousError : Error {
    explicit BoundVacuousError(const std::string& what)
        : Error(ErrorClass::Precondition, "bound_vacuous", what) {}
};

struct NumericalError : Error {
    explicit NumericalError(const std::string& what) : Error(ErrorClass::Numerical, "numerical", what) {}
    NumericalError(std::string kind, const std::string& what)
        : Error(ErrorClass::Numerical, std::move(kind), what) {}
};

struct ConvergenceError : NumericalError {
    explicit ConvergenceError(const std::string& what) : NumericalError("convergence", what) {}
};

struct ResolutionError : NumericalError {
    explicit ResolutionError(const std::string& what) : NumericalError("resolution", what) {}
};

struct LinearAlgebraError : NumericalError {
    explicit LinearAlgebraError(const std::string& what) : NumericalError("linear_algebra", what) {}
};

struct CellTooSmallError : NumericalError {
    explicit CellTooSmallError(const std::string& what) : NumericalError("cell_too_small", what) {}
};

} // namespace pfq
