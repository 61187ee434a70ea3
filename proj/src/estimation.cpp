#include "lqr/estimation.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <optional>

namespace lqr {

namespace {

constexpr double kSingularRelTol = 1e-12;

// Solves (M + ridge I) X = rhs for symmetric PSD M, flagging singularity on
// the ridge-free path.
Matrix psd_solve(const Matrix& m, double ridge, const Matrix& rhs, const char* what) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m));
    if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
    double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
    if (ridge == 0.0 && es.eigenvalues().minCoeff() <= kSingularRelTol * std::max(1.0, lmax))
        throw SingularMatrixError(std::string(what) +
                                  " is singular; pass a positive ridge to regularize");
    Matrix shifted = symmetrize(m);
    shifted.diagonal().array() += ridge;
    Eigen::LDLT<Matrix> ldlt(shifted);
    if (ldlt.info() != Eigen::Success)
        throw SingularMatrixError(std::string(what) + " factorization failed");
    return ldlt.solve(rhs);
}

}  // namespace

ConstraintSet ConstraintSet::none_of(int p, int q) {
    ConstraintSet c;
    c.kind = Kind::none;
    c.p = p;
    c.q = q;
    return c;
}

ConstraintSet ConstraintSet::support(Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask) {
    ConstraintSet c;
    c.kind = Kind::support;
    c.p = static_cast<int>(mask.rows());
    c.q = static_cast<int>(mask.cols());
    c.support_mask = std::move(mask);
    return c;
}

ConstraintSet ConstraintSet::subspace(Matrix basis, Matrix offset) {
    ConstraintSet c;
    c.kind = Kind::subspace;
    c.p = static_cast<int>(offset.rows());
    c.q = static_cast<int>(offset.cols());
    require(basis.rows() == static_cast<long>(c.p) * c.q, "basis rows must equal p*q");
    require(basis.cols() <= basis.rows(), "subspace dimension exceeds p*q");
    if (basis.cols() > 0) {
        Matrix gram = basis.transpose() * basis;
        if (spectral_norm(gram - Matrix::Identity(basis.cols(), basis.cols())) > 1e-12)
            throw ConfigError("subspace basis must be orthonormal");
    }
    c.basis = std::move(basis);
    c.offset = std::move(offset);
    return c;
}

ConstraintSet ConstraintSet::known_b(const Matrix& b0, int p) {
    const int r = static_cast<int>(b0.cols());
    const int q = p + r;
    Matrix offset = Matrix::Zero(p, q);
    offset.rightCols(r) = b0;
    Matrix basis = Matrix::Zero(static_cast<long>(p) * q, static_cast<long>(p) * p);
    // Unit directions for the A block; vec is column-major over the p x q matrix.
    long col = 0;
    for (int j = 0; j < p; ++j)
        for (int i = 0; i < p; ++i) basis(static_cast<long>(j) * p + i, col++) = 1.0;
    return subspace(std::move(basis), std::move(offset));
}

int ConstraintSet::dimension() const {
    switch (kind) {
        case Kind::none: return p * q;
        case Kind::support: return static_cast<int>(support_mask.cast<int>().sum());
        case Kind::subspace: return static_cast<int>(basis.cols());
    }
    return 0;
}

Matrix ConstraintSet::tangent_basis() const {
    const long n = static_cast<long>(p) * q;
    switch (kind) {
        case Kind::none: return Matrix::Identity(n, n);
        case Kind::subspace: return basis;
        case Kind::support: {
            Matrix b = Matrix::Zero(n, dimension());
            long col = 0;
            for (int j = 0; j < q; ++j)
                for (int i = 0; i < p; ++i)
                    if (support_mask(i, j)) b(static_cast<long>(j) * p + i, col++) = 1.0;
            return b;
        }
    }
    return Matrix::Zero(n, 0);
}

Matrix ConstraintSet::unvec(const Vector& coords) const {
    return Eigen::Map<const Matrix>(coords.data(), p, q);
}

EstimatorState::EstimatorState(int p, int q)
    : gram(Matrix::Zero(q, q)), cross(Matrix::Zero(p, q)), theta_hat(Matrix::Zero(p, q)) {}

void absorb(EstimatorState& state, const Vector& x, const Vector& u, const Vector& x_next) {
    require(x.size() + u.size() == state.q() && x_next.size() == state.p(),
            "absorb: dimension mismatch");
    Vector z(state.q());
    z << x, u;
    state.gram.noalias() += z * z.transpose();
    state.cross.noalias() += x_next * z.transpose();
    state.sq_norm_next += x_next.squaredNorm();
    state.n_samples += 1;
}

Matrix solve_lse(const EstimatorState& state, double ridge) {
    require(state.n_samples >= 1, "solve_lse needs at least one sample");
    require(ridge >= 0.0, "ridge must be nonnegative");
    Matrix theta_t = psd_solve(state.gram, ridge, state.cross.transpose(), "Gram matrix");
    return theta_t.transpose();
}

Matrix solve_restricted_lse(const EstimatorState& state, const ConstraintSet& constraint,
                            double ridge) {
    require(constraint.p == state.p() && constraint.q == state.q(),
            "constraint shape does not match the estimator");
    switch (constraint.kind) {
        case ConstraintSet::Kind::none:
            return solve_lse(state, ridge);
        case ConstraintSet::Kind::subspace: {
            const int d = constraint.dimension();
            if (d == 0) return constraint.offset;
            // Normal equations in basis coordinates: the objective is quadratic
            // in theta, so restriction to the affine set is exact.
            std::vector<Matrix> dirs;
            dirs.reserve(d);
            for (int i = 0; i < d; ++i) dirs.push_back(constraint.unvec(constraint.basis.col(i)));
            Matrix target = state.cross - constraint.offset * state.gram;
            Matrix m(d, d);
            Vector g(d);
            for (int i = 0; i < d; ++i) {
                g(i) = (dirs[i].array() * target.array()).sum();
                Matrix vi = dirs[i] * state.gram;
                for (int j = i; j < d; ++j) {
                    m(i, j) = (vi.array() * dirs[j].array()).sum();
                    m(j, i) = m(i, j);
                }
            }
            Vector coeff = psd_solve(m, ridge, g, "restricted Gram matrix");
            Matrix theta = constraint.offset;
            for (int i = 0; i < d; ++i) theta += coeff(i) * dirs[i];
            return theta;
        }
        case ConstraintSet::Kind::support: {
            Matrix theta = Matrix::Zero(state.p(), state.q());
            for (int i = 0; i < state.p(); ++i) {
                std::vector<int> cols;
                for (int j = 0; j < state.q(); ++j)
                    if (constraint.support_mask(i, j)) cols.push_back(j);
                if (cols.empty()) continue;
                const int d = static_cast<int>(cols.size());
                Matrix sub(d, d);
                Vector rhs(d);
                for (int a = 0; a < d; ++a) {
                    rhs(a) = state.cross(i, cols[a]);
                    for (int b = 0; b < d; ++b) sub(a, b) = state.gram(cols[a], cols[b]);
                }
                Vector w = psd_solve(sub, ridge, rhs, "masked Gram matrix");
                for (int a = 0; a < d; ++a) theta(i, cols[a]) = w(a);
            }
            return theta;
        }
    }
    throw ConfigError("unknown constraint kind");
}

double lse_objective(const EstimatorState& state, const Matrix& theta) {
    // sum ||x_next||^2 - 2 tr(theta cross') + tr(theta gram theta')
    double quad = (theta * state.gram).cwiseProduct(theta).sum();
    double lin = theta.cwiseProduct(state.cross).sum();
    return state.sq_norm_next - 2.0 * lin + quad;
}

ExcitationReport excitation_report(const EstimatorState& state, const SystemSpec& spec,
                                   const NoiseModel& noise, const PolicyTrace& trace,
                                   double delta) {
    require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
    const long n = trace.length();
    ExcitationReport report;
    {
        Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(state.gram), Eigen::EigenvaluesOnly);
        report.lambda_min_gram = std::max(es.eigenvalues().minCoeff(), 0.0);
    }
    if (n < 2) return report;

    // Configured covariance sums over the stated index ranges.
    Matrix sigma_w = Matrix::Zero(spec.p(), spec.p());
    for (long t = 1; t <= n - 1; ++t) sigma_w += noise.covariance_at(t);
    {
        Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(sigma_w), Eigen::EigenvaluesOnly);
        report.lambda_w = std::max(es.eigenvalues().minCoeff(), 0.0);
    }
    double lambda_v = 0.0;
    for (long t = 0; t <= n - 2; ++t) lambda_v += trace.v_cov_scale[static_cast<std::size_t>(t)];
    report.lambda_v = lambda_v;
    report.lambda_lower = std::min(report.lambda_w, report.lambda_v);

    // Empirical counterparts of the per-step bound sequences, as running
    // maxima of realized norms.
    const Matrix& l_star = spec.opt.L;
    const double b_norm = spectral_norm(spec.theta0.B);
    const double d_norm = spectral_norm(spec.d0());
    const double l_norm = spectral_norm(l_star);
    double vbar = 0.0, lbar = 0.0, xbar = 0.0;
    std::vector<double> wmax(static_cast<std::size_t>(n) + 1, 0.0);
    for (long t = 1; t <= n; ++t)
        wmax[static_cast<std::size_t>(t)] =
            std::max(wmax[static_cast<std::size_t>(t - 1)],
                     trace.traj.w[static_cast<std::size_t>(t - 1)].norm());
    double v1_sq = 0.0, v2_sq = 0.0;
    for (long t = 0; t <= n - 2; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        vbar = std::max(vbar, trace.traj.v[ts].norm());
        xbar = std::max(xbar, trace.traj.x[ts].norm());
        lbar = std::max(lbar, ((l_star - trace.gain_at(t)) * trace.traj.x[ts]).norm());
        double w_next = wmax[static_cast<std::size_t>(t + 1)];
        double y = b_norm * vbar + w_next + 2.0 * b_norm * lbar + 2.0 * d_norm * xbar;
        double inner1 = b_norm * vbar + w_next;
        v1_sq += y * y * inner1 * inner1;
        double inner2 = 2.0 * (1.0 + l_norm) * xbar + 2.0 * lbar + vbar;
        v2_sq += vbar * vbar * inner2 * inner2;
    }
    report.v1 = std::sqrt(v1_sq);
    report.v2 = std::sqrt(v2_sq);
    report.cond_w_satisfied =
        report.lambda_w >= 4.0 * report.v1 * std::sqrt(std::log(8.0 * spec.p() / delta));
    report.cond_v_satisfied =
        report.lambda_v >= 4.0 * report.v2 * std::sqrt(std::log(8.0 * spec.q() / delta));
    return report;
}

double identifiability_probe(const ConstraintSet& constraint, const DynamicsPair& theta0,
                             const CostPair& cost, int n_samples, RngStream& rng) {
    const int p = theta0.p();
    const int r = theta0.r();
    Matrix tangent = constraint.tangent_basis();
    const int d = static_cast<int>(tangent.cols());
    if (d == 0) return 0.0;  // singleton set: empty ratio family

    const Matrix l_star = solve_riccati(theta0, cost).L;
    const double inf = std::numeric_limits<double>::infinity();

    auto sample_theta = [&](double scale) -> std::optional<DynamicsPair> {
        for (int tries = 0; tries < 32; ++tries) {
            Vector coeff = rng.gaussian_vector(d);
            coeff /= std::max(coeff.norm(), 1e-300);
            Matrix direction = constraint.unvec(tangent * coeff);
            Matrix theta = theta0.stacked() + scale * direction;
            try {
                DynamicsPair pair = DynamicsPair::from_stacked(theta, p, r);
                solve_riccati(pair, cost, 1e-9, 2000);
                return pair;
            } catch (const NumericalError&) {
                continue;  // resample non-stabilizable draws
            }
        }
        return std::nullopt;
    };

    auto extended_gain = [&](const DynamicsPair& pair) {
        Matrix lt(p + r, p);
        lt.topRows(p) = Matrix::Identity(p, p);
        lt.bottomRows(r) = solve_riccati(pair, cost, 1e-9, 2000).L;
        return lt;
    };

    double max_ratio = 0.0;
    for (int s = 0; s < n_samples; ++s) {
        double scale1 = std::pow(10.0, -4.0 + 3.0 * rng.uniform());
        double scale2 = std::pow(10.0, -4.0 + 3.0 * rng.uniform());
        auto theta1 = sample_theta(scale1);
        auto theta2 = sample_theta(scale2);
        if (!theta1 || !theta2) continue;
        Matrix lt1 = extended_gain(*theta1);
        Matrix l2 = solve_riccati(*theta2, cost, 1e-9, 2000).L;
        double numer = spectral_norm(l2 - l_star);
        double denom = spectral_norm((theta2->stacked() - theta0.stacked()) * lt1);
        if (denom < 1e-14) {
            if (numer > 1e-10) return inf;
            continue;
        }
        max_ratio = std::max(max_ratio, numer / denom);
    }

    // Targeted search: directions in the constraint tangent space that are
    // annihilated by theta -> theta Ltilde(theta1) but still move the gain.
    for (int s = 0; s < 4; ++s) {
        auto theta1 = sample_theta(1e-3);
        if (!theta1) continue;
        Matrix lt1 = extended_gain(*theta1);
        Matrix mapped(static_cast<long>(p) * p, d);
        for (int i = 0; i < d; ++i) {
            Matrix image = constraint.unvec(tangent.col(i)) * lt1;
            mapped.col(i) = Eigen::Map<const Vector>(image.data(), image.size());
        }
        Eigen::JacobiSVD<Matrix> svd(mapped, Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        if (sv.size() == 0) continue;
        double smax = sv(0);
        int rank = 0;
        for (int i = 0; i < sv.size(); ++i)
            if (sv(i) > 1e-10 * std::max(smax, 1.0)) ++rank;
        if (rank == d) continue;
        Vector null_coeff = svd.matrixV().col(d - 1);
        Matrix direction = constraint.unvec(tangent * null_coeff);
        double eps = 1e-3;
        try {
            DynamicsPair pair =
                DynamicsPair::from_stacked(theta0.stacked() + eps * direction, p, r);
            Matrix l2 = solve_riccati(pair, cost, 1e-9, 2000).L;
            if (spectral_norm(l2 - l_star) > 1e-8) return inf;
        } catch (const NumericalError&) {
            continue;
        }
    }
    return max_ratio;
}

}  // namespace lqr
