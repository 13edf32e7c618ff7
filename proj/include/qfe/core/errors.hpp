#pragma once

#include <stdexcept>
#include <string>

namespace qfe {

// Least-squares design matrix without full column rank.
class DegenerateBasisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Backward scheme left its declared bound (unstable configuration).
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Iterative scheme hit its iteration cap.
class NonConvergenceError : public std::runtime_error {
public:
    NonConvergenceError(const std::string& what, double last_residual)
        : std::runtime_error(what), last_residual_(last_residual) {}

    double last_residual() const noexcept { return last_residual_; }

private:
    double last_residual_;
};

// Malformed or unresolvable experiment configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace qfe
