#pragma once

#include <stdexcept>
#include <string>

namespace biaxis {

// Bad shapes, malformed files, out-of-range arguments. CLI exit code 2.
class input_error : public std::runtime_error {
public:
    explicit input_error(const std::string& msg) : std::runtime_error(msg) {}
};

class dimension_error : public input_error {
public:
    explicit dimension_error(const std::string& msg) : input_error(msg) {}
};

// NaN losses, non-convergent solvers. CLI exit code 3.
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& msg, double residual = 0.0)
        : std::runtime_error(msg), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

} // namespace biaxis
