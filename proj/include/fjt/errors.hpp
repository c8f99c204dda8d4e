#pragma once

#include <stdexcept>
#include <string>

namespace fjt {

/// Argument outside the mathematical domain of an operation.
class domain_error : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Channel matrix with (numerically) zero determinant reached a ZF routine.
class singular_channel_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// C0 == 0 in the closed-form power allocation: the two precoder row-power
/// vectors are collinear and the equality system has no unique solution.
class degenerate_channel_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A solver produced a state that violates energy causality.
class constraint_violation_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Iterative method stopped without meeting its tolerance.
class convergence_error : public std::runtime_error {
public:
    convergence_error(const std::string& what, double residual, long iterations)
        : std::runtime_error(what), residual_(residual), iterations_(iterations) {}

    double residual() const noexcept { return residual_; }
    long iterations() const noexcept { return iterations_; }

private:
    double residual_;
    long iterations_;
};

/// Singular or ill-posed linear system in an exact evaluation step.
class numeric_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Experiment configuration could not be parsed or validated.
class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace fjt
