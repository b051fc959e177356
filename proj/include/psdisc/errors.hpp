#pragma once

#include <stdexcept>
#include <string>

namespace psdisc {

// Bad input data, configs, or CLI usage. Mapped to exit code 1.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure (quadrature non-convergence, non-finite posterior, ...).
// Mapped to exit code 2.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace psdisc
