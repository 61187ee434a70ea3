#include "lqr/riccati.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace lqr {

namespace {

void check_finite(const Matrix& m, const char* name) {
    if (!m.allFinite()) throw ConfigError(std::string(name) + " has non-finite entries");
}

// Cholesky factor of B'KB + R; positive definite whenever K is PSD and R is PD.
Eigen::LLT<Matrix> input_hessian_llt(const DynamicsPair& theta, const CostPair& cost,
                                     const Matrix& K) {
    Matrix s = theta.B.transpose() * K * theta.B + cost.R;
    Eigen::LLT<Matrix> llt(symmetrize(s));
    if (llt.info() != Eigen::Success)
        throw NumericalError("B'KB + R is not positive definite");
    return llt;
}

}  // namespace

DynamicsPair::DynamicsPair(Matrix a, Matrix b) : A(std::move(a)), B(std::move(b)) {
    require(A.rows() == A.cols(), "A must be square");
    require(B.rows() == A.rows(), "B must have as many rows as A");
    require(B.cols() >= 1, "B must have at least one column");
    check_finite(A, "A");
    check_finite(B, "B");
}

Matrix DynamicsPair::stacked() const {
    Matrix theta(p(), q());
    theta << A, B;
    return theta;
}

DynamicsPair DynamicsPair::from_stacked(const Matrix& theta, int p, int r) {
    require(theta.rows() == p && theta.cols() == p + r, "theta has wrong shape");
    return DynamicsPair(theta.leftCols(p), theta.rightCols(r));
}

CostPair::CostPair(Matrix q, Matrix r) : Q(std::move(q)), R(std::move(r)) {
    require(Q.rows() == Q.cols() && R.rows() == R.cols(), "Q and R must be square");
    check_finite(Q, "Q");
    check_finite(R, "R");
    auto check_spd = [](const Matrix& m, const char* name) {
        if (spectral_norm(m - m.transpose()) > 1e-10 * (1.0 + spectral_norm(m)))
            throw ConfigError(std::string(name) + " must be symmetric");
        Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
            throw ConfigError(std::string(name) + " must be positive definite");
    };
    check_spd(Q, "Q");
    check_spd(R, "R");
}

Matrix riccati_operator(const DynamicsPair& theta, const CostPair& cost, const Matrix& K) {
    require(K.rows() == theta.p() && K.cols() == theta.p(), "K has wrong shape");
    require(cost.Q.rows() == theta.p(), "Q dimension does not match A");
    require(cost.R.rows() == theta.r(), "R dimension does not match B");
    auto llt = input_hessian_llt(theta, cost, K);
    Matrix w = theta.B.transpose() * K * theta.A;  // r x p
    Matrix t = cost.Q + theta.A.transpose() * K * theta.A - w.transpose() * llt.solve(w);
    return symmetrize(t);
}

Matrix feedback_gain(const DynamicsPair& theta, const CostPair& cost, const Matrix& K) {
    require(K.rows() == theta.p() && K.cols() == theta.p(), "K has wrong shape");
    auto llt = input_hessian_llt(theta, cost, K);
    return -llt.solve(theta.B.transpose() * K * theta.A);
}

RiccatiSolution solve_riccati(const DynamicsPair& theta, const CostPair& cost, double tol,
                              int max_iter) {
    Matrix k = cost.Q;
    for (int iter = 1; iter <= max_iter; ++iter) {
        Matrix next = riccati_operator(theta, cost, k);
        double residual = spectral_norm(k - next);
        if (residual <= tol) {
            RiccatiSolution sol{symmetrize(k), feedback_gain(theta, cost, k), residual, iter};
            if (spectral_radius(theta.A + theta.B * sol.L) >= 1.0)
                throw NonConvergenceError(
                    "Riccati iteration converged to a non-stabilizing gain; "
                    "the pair is likely not stabilizable");
            return sol;
        }
        k = next;
        if (!k.allFinite() || k.norm() > 1e100)
            throw NonConvergenceError(
                "Riccati iterates diverged; the pair is likely not stabilizable");
    }
    throw NonConvergenceError("Riccati iteration did not reach tolerance in " +
                              std::to_string(max_iter) +
                              " iterations; the pair is likely not stabilizable");
}

double spectral_radius(const Matrix& m) {
    require(m.rows() == m.cols(), "spectral_radius needs a square matrix");
    if (!m.allFinite()) throw NumericalError("spectral_radius: non-finite entries");
    Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success) throw NumericalError("eigen solver failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix solve_discrete_lyapunov(const Matrix& d0, const Matrix& p0) {
    require(d0.rows() == d0.cols() && p0.rows() == p0.cols() && d0.rows() == p0.rows(),
            "Lyapunov dimensions mismatch");
    if (spectral_radius(d0) >= 1.0)
        throw NumericalError("discrete Lyapunov equation needs a stable D0");
    // Doubling on the series sum_j D0'^j P0 D0^j.
    Matrix sum = symmetrize(p0);
    Matrix power = d0;
    for (int iter = 0; iter < 128; ++iter) {
        Matrix increment = power.transpose() * sum * power;
        sum = symmetrize(sum + increment);
        if (increment.norm() <= 1e-16 * (1.0 + sum.norm())) break;
        power = power * power;
    }
    return sum;
}

Matrix lyapunov_tail(const Matrix& d0, const Matrix& p0, long n_terms) {
    require(n_terms >= 0, "n_terms must be nonnegative");
    Matrix full = solve_discrete_lyapunov(d0, p0);
    // tail(m) = D0'^m K D0^m, via binary exponentiation of D0.
    Matrix power = Matrix::Identity(d0.rows(), d0.cols());
    Matrix base = d0;
    long m = n_terms;
    while (m > 0) {
        if (m & 1) power = power * base;
        base = base * base;
        m >>= 1;
    }
    return symmetrize(power.transpose() * full * power);
}

std::vector<Matrix> lyapunov_tail_sequence(const Matrix& d0, const Matrix& p0, long max_terms) {
    Matrix full = solve_discrete_lyapunov(d0, p0);
    std::vector<Matrix> tails;
    tails.reserve(static_cast<std::size_t>(max_terms) + 1);
    Matrix power = Matrix::Identity(d0.rows(), d0.cols());
    for (long j = 0; j <= max_terms; ++j) {
        tails.push_back(symmetrize(power.transpose() * full * power));
        power = power * d0;
    }
    return tails;
}

}  // namespace lqr
