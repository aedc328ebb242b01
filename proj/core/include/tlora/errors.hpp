#pragma once

#include <stdexcept>
#include <string>

namespace tlora {

// Configuration / input validation failure (maps to CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure: SVD non-convergence, NaN loss (maps to CLI exit code 3).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

class SvdConvergenceError : public NumericalError {
public:
    explicit SvdConvergenceError(const std::string& what) : NumericalError(what) {}
};

// Raised when an effective rank is requested for an all-zero spectrum.
class UndefinedRankError : public std::runtime_error {
public:
    explicit UndefinedRankError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tlora
