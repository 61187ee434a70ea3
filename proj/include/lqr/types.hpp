#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace lqr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Invalid configuration or input (dimension mismatch, infeasible design, ...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failure at runtime (eigensolver breakdown, overflow, ...).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Linear system is singular; caller should retry with a ridge term.
struct SingularMatrixError : NumericalError {
    using NumericalError::NumericalError;
};

// Iteration failed to reach the requested tolerance.
struct NonConvergenceError : NumericalError {
    using NumericalError::NumericalError;
};

// Recorded data is inconsistent with what it claims to be.
struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Largest singular value (operator 2-norm).
double spectral_norm(const Matrix& m);

/// (M + M')/2; used to keep iterates on the symmetric manifold.
Matrix symmetrize(const Matrix& m);

void require(bool cond, const std::string& what);

}  // namespace lqr
