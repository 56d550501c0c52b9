#pragma once

#include <stdexcept>
#include <string>

namespace ddpc {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Not enough samples (or not rich enough samples) for the requested construction.
class InsufficientData : public Error {
public:
    using Error::Error;
};

/// The optimization problem has an empty feasible set.
class InfeasibleProblem : public Error {
public:
    using Error::Error;
};

/// Singular, indefinite or ill-conditioned numerics.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Unknown names or malformed parameters.
class ConfigError : public Error {
public:
    using Error::Error;
};

inline void require(bool condition, const std::string& what)
{
    if (!condition) {
        throw DimensionError(what);
    }
}

}  // namespace ddpc
