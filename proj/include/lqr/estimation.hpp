#pragma once

#include "lqr/dynamics.hpp"
#include "lqr/rng.hpp"
#include "lqr/types.hpp"

namespace lqr {

// Identifiability set Theta_0 as an affine constraint on the p x q parameter:
// either everything, a support mask, or offset + span of an orthonormal basis
// (columns of `basis` are vec'd p x q matrices, column-major).
struct ConstraintSet {
    enum class Kind { none, support, subspace };

    Kind kind = Kind::none;
    int p = 0;
    int q = 0;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> support_mask;
    Matrix basis;   // (p*q) x d, orthonormal columns
    Matrix offset;  // p x q, zero for linear subspaces

    static ConstraintSet none_of(int p, int q);
    static ConstraintSet support(Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask);
    static ConstraintSet subspace(Matrix basis, Matrix offset);
    /// {[A, B0] : A free} -- the known-input-matrix subspace.
    static ConstraintSet known_b(const Matrix& b0, int p);

    int dimension() const;

    /// Orthonormal basis of the tangent space as vec'd directions (for the
    /// identifiability probe); for `none` this is the identity on R^{p*q}.
    Matrix tangent_basis() const;

    Matrix unvec(const Vector& coords) const;
};

// Running sufficient statistics of the regression x(t+1) ~ theta [x(t); u(t)].
struct EstimatorState {
    Matrix gram;            // q x q, sum of z z'
    Matrix cross;           // p x q, sum of x_next z'
    double sq_norm_next = 0.0;  // sum of ||x_next||^2 (residual accounting)
    long n_samples = 0;
    Matrix theta_hat;       // p x q current estimate

    EstimatorState(int p, int q);
    int p() const { return static_cast<int>(cross.rows()); }
    int q() const { return static_cast<int>(cross.cols()); }
};

/// Absorb one transition; theta_hat is left untouched.
void absorb(EstimatorState& state, const Vector& x, const Vector& u, const Vector& x_next);

/// cross (gram + ridge I)^{-1}. Throws SingularMatrixError when ridge = 0 and
/// the Gram matrix is singular, pointing the caller to the ridge path.
Matrix solve_lse(const EstimatorState& state, double ridge = 0.0);

/// Least squares restricted to the constraint set; output lies in Theta_0
/// exactly. Subspace constraints solve the normal equations in basis
/// coordinates; support constraints solve row by row over allowed columns.
Matrix solve_restricted_lse(const EstimatorState& state, const ConstraintSet& constraint,
                            double ridge = 0.0);

/// Residual objective sum_t ||x(t+1) - theta z(t)||^2 from the running sums.
double lse_objective(const EstimatorState& state, const Matrix& theta);

struct ExcitationReport {
    double lambda_min_gram = 0.0;
    double lambda_w = 0.0;       // lambda_min of configured Sigma_w
    double lambda_v = 0.0;       // lambda_min of configured Sigma_v
    double lambda_lower = 0.0;   // lambda_n = min of the two
    double v1 = 0.0;             // interaction-energy bound V_1
    double v2 = 0.0;             // interaction-energy bound V_2
    bool cond_w_satisfied = false;
    bool cond_v_satisfied = false;
};

/// Diagnostic evaluation of the excitation quantities and the two
/// minimum-singular-value conditions at confidence delta. The per-step bound
/// sequences are realized as running maxima of the realized norms.
ExcitationReport excitation_report(const EstimatorState& state, const SystemSpec& spec,
                                   const NoiseModel& noise, const PolicyTrace& trace,
                                   double delta);

/// Monte Carlo lower bound for the identifiability ratio
///   sup ||L(theta2) - L(theta0)|| / ||(theta2 - theta0) Ltilde(theta1)||
/// over theta1, theta2 in Theta_0 near theta0. Returns +inf when a
/// null-space direction with a nonzero gain change is found, 0 for a
/// zero-dimensional constraint set.
double identifiability_probe(const ConstraintSet& constraint, const DynamicsPair& theta0,
                             const CostPair& cost, int n_samples, RngStream& rng);

}  // namespace lqr
