#pragma once

#include <vector>

#include "lqr/types.hpp"

namespace lqr {

// Dynamics pair theta = [A, B]: state transition A (p x p), input matrix B (p x r).
struct DynamicsPair {
    Matrix A;
    Matrix B;

    DynamicsPair(Matrix a, Matrix b);

    int p() const { return static_cast<int>(A.rows()); }
    int r() const { return static_cast<int>(B.cols()); }
    int q() const { return p() + r(); }

    /// Concatenation [A, B] as a p x q matrix.
    Matrix stacked() const;

    /// Splits a p x q matrix back into [A, B].
    static DynamicsPair from_stacked(const Matrix& theta, int p, int r);
};

// Quadratic cost matrices; both symmetric positive definite, checked at construction.
struct CostPair {
    Matrix Q;
    Matrix R;

    CostPair(Matrix q, Matrix r);
};

struct RiccatiSolution {
    Matrix K;         // fixed point, symmetric positive definite
    Matrix L;         // feedback gain, r x p
    double residual;  // operator norm of K - T(K)
    int iterations;
};

/// Riccati operator T(K) = Q + A'KA - A'KB (B'KB + R)^{-1} B'KA, symmetrized.
Matrix riccati_operator(const DynamicsPair& theta, const CostPair& cost, const Matrix& K);

/// Fixed-point iteration K <- T(K) from K0 = Q until ||K - T(K)||_2 <= tol.
/// Throws NonConvergenceError when max_iter is exhausted or the iterates blow
/// up, which is the diagnostic for a non-stabilizable pair.
RiccatiSolution solve_riccati(const DynamicsPair& theta, const CostPair& cost,
                              double tol = 1e-10, int max_iter = 10000);

/// L = -(B'KB + R)^{-1} B'KA.
Matrix feedback_gain(const DynamicsPair& theta, const CostPair& cost, const Matrix& K);

/// Largest eigenvalue magnitude.
double spectral_radius(const Matrix& m);

/// Solves K - D0' K D0 = P0 for stable D0 (doubling iteration).
Matrix solve_discrete_lyapunov(const Matrix& d0, const Matrix& p0);

/// Tail sum_{j >= n_terms} D0'^j P0 D0^j of the Lyapunov series,
/// computed as D0'^n K D0^n with K the full solution.
Matrix lyapunov_tail(const Matrix& d0, const Matrix& p0, long n_terms);

/// tails[j] = lyapunov_tail(d0, p0, j) for j = 0..max_terms, in one sweep.
std::vector<Matrix> lyapunov_tail_sequence(const Matrix& d0, const Matrix& p0, long max_terms);

}  // namespace lqr
