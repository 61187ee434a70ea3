#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <vector>

#include "lqr/harness.hpp"
#include "lqr/riccati.hpp"

using namespace lqr;

namespace {

double max_abs_diff(const Matrix& a, const Matrix& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

// Independent evaluation of Q + A'KA - A'KB (B'KB+R)^{-1} B'KA with plain
// loops and Gauss-Jordan elimination; shares nothing with the library path.
std::vector<std::vector<double>> plain_riccati_operator(
    const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b,
    const std::vector<std::vector<double>>& q, const std::vector<std::vector<double>>& r,
    const std::vector<std::vector<double>>& k) {
    const int p = static_cast<int>(a.size());
    const int m = static_cast<int>(b[0].size());
    auto zeros = [](int rows, int cols) {
        return std::vector<std::vector<double>>(rows, std::vector<double>(cols, 0.0));
    };
    auto mul = [&](const auto& x, const auto& y) {
        auto z = zeros(static_cast<int>(x.size()), static_cast<int>(y[0].size()));
        for (std::size_t i = 0; i < x.size(); ++i)
            for (std::size_t j = 0; j < y[0].size(); ++j)
                for (std::size_t l = 0; l < y.size(); ++l) z[i][j] += x[i][l] * y[l][j];
        return z;
    };
    auto transpose = [&](const auto& x) {
        auto z = zeros(static_cast<int>(x[0].size()), static_cast<int>(x.size()));
        for (std::size_t i = 0; i < x.size(); ++i)
            for (std::size_t j = 0; j < x[0].size(); ++j) z[j][i] = x[i][j];
        return z;
    };
    auto inverse = [&](std::vector<std::vector<double>> x) {
        const int n = static_cast<int>(x.size());
        auto inv = zeros(n, n);
        for (int i = 0; i < n; ++i) inv[i][i] = 1.0;
        for (int col = 0; col < n; ++col) {
            int pivot = col;
            for (int row = col + 1; row < n; ++row)
                if (std::abs(x[row][col]) > std::abs(x[pivot][col])) pivot = row;
            std::swap(x[col], x[pivot]);
            std::swap(inv[col], inv[pivot]);
            double d = x[col][col];
            for (int j = 0; j < n; ++j) {
                x[col][j] /= d;
                inv[col][j] /= d;
            }
            for (int row = 0; row < n; ++row) {
                if (row == col) continue;
                double f = x[row][col];
                for (int j = 0; j < n; ++j) {
                    x[row][j] -= f * x[col][j];
                    inv[row][j] -= f * inv[col][j];
                }
            }
        }
        return inv;
    };
    auto at = transpose(a);
    auto bt = transpose(b);
    auto ka = mul(k, a);
    auto kb = mul(k, b);
    auto gram = mul(bt, kb);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) gram[i][j] += r[i][j];
    auto middle = mul(mul(mul(at, kb), inverse(gram)), mul(bt, ka));
    auto out = mul(at, ka);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) out[i][j] += q[i][j] - middle[i][j];
    return out;
}

std::vector<std::vector<double>> to_plain(const Matrix& m) {
    std::vector<std::vector<double>> out(m.rows(), std::vector<double>(m.cols()));
    for (long i = 0; i < m.rows(); ++i)
        for (long j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
    return out;
}

}  // namespace

TEST_CASE("riccati operator reduces to Q when A is zero") {
    DynamicsPair theta(Matrix::Zero(3, 3), Matrix::Identity(3, 3));
    CostPair cost(Matrix::Identity(3, 3), Matrix::Identity(3, 3));
    Matrix out = riccati_operator(theta, cost, Matrix::Identity(3, 3));
    CHECK(max_abs_diff(out, Matrix::Identity(3, 3)) <= 1e-15);
}

TEST_CASE("riccati operator matches the scalar formula") {
    Matrix a(1, 1), b(1, 1), q(1, 1), r(1, 1), k(1, 1);
    a << 0.5;
    b << 1.0;
    q << 1.0;
    r << 1.0;
    k << 1.0;
    Matrix out = riccati_operator(DynamicsPair(a, b), CostPair(q, r), k);
    CHECK(out(0, 0) == doctest::Approx(1.125).epsilon(1e-14));
}

TEST_CASE("riccati operator agrees with an independent implementation on the benchmark system") {
    SystemSpec sys = paper_eq11();
    Matrix k = sys.cost.Q;
    Matrix ours = riccati_operator(sys.theta0, sys.cost, k);
    auto plain = plain_riccati_operator(to_plain(sys.theta0.A), to_plain(sys.theta0.B),
                                        to_plain(sys.cost.Q), to_plain(sys.cost.R), to_plain(k));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(std::abs(ours(i, j) - plain[i][j]) <= 1e-12);
}

TEST_CASE("solve_riccati fixed point of the zero-A system") {
    DynamicsPair theta(Matrix::Zero(2, 2), Matrix::Identity(2, 2));
    CostPair cost(Matrix::Identity(2, 2), Matrix::Identity(2, 2));
    RiccatiSolution sol = solve_riccati(theta, cost);
    CHECK(max_abs_diff(sol.K, Matrix::Identity(2, 2)) <= 1e-10);
    CHECK(sol.L.cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("solve_riccati matches the scalar closed-form root") {
    Matrix a(1, 1), b(1, 1), q(1, 1), r(1, 1);
    a << 0.5;
    b << 1.0;
    q << 1.0;
    r << 1.0;
    RiccatiSolution sol = solve_riccati(DynamicsPair(a, b), CostPair(q, r));
    // positive root of k^2 - 0.25 k - 1 = 0
    double root = (0.25 + std::sqrt(0.0625 + 4.0)) / 2.0;
    CHECK(sol.K(0, 0) == doctest::Approx(root).epsilon(1e-9));
    CHECK(sol.L(0, 0) == doctest::Approx(-0.5 * root / (root + 1.0)).epsilon(1e-9));
}

TEST_CASE("solve_riccati on the benchmark system: stabilizing, regression snapshot") {
    SystemSpec sys = paper_eq11();
    CHECK(sys.opt.residual <= 1e-10);
    double rho = spectral_radius(sys.theta0.A + sys.theta0.B * sys.opt.L);
    CHECK(rho < 1.0);
    CHECK(rho == doctest::Approx(0.3564645094475077).epsilon(1e-8));
    Matrix k_expected(3, 3);
    k_expected << 1.172686816145725, -0.02975290505568789, 0.23087097512524105,
        -0.02975290505568789, 0.7357520447490233, 0.12057996869901652,
        0.23087097512524105, 0.12057996869901652, 0.9904691220621622;
    CHECK(max_abs_diff(sys.opt.K, k_expected) <= 1e-8);
}

TEST_CASE("feedback gain edge cases") {
    DynamicsPair theta(Matrix::Zero(2, 2), Matrix::Identity(2, 2));
    CostPair cost(Matrix::Identity(2, 2), Matrix::Identity(2, 2));
    CHECK(feedback_gain(theta, cost, Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);

    Matrix a(1, 1), b(1, 1), q(1, 1), r(1, 1), k(1, 1);
    a << 0.5;
    b << 1.0;
    q << 1.0;
    r << 1.0;
    k << 1.1327822185373186;
    Matrix l = feedback_gain(DynamicsPair(a, b), CostPair(q, r), k);
    CHECK(l(0, 0) == doctest::Approx(-0.2655644370746374).epsilon(1e-12));

    // K = 0 formally gives -R^{-1} 0 A = 0.
    Matrix a2(2, 2);
    a2 << 1.0, 2.0, 3.0, 4.0;
    Matrix l0 = feedback_gain(DynamicsPair(a2, Matrix::Identity(2, 2)),
                              CostPair(Matrix::Identity(2, 2), Matrix::Identity(2, 2)),
                              Matrix::Zero(2, 2));
    CHECK(l0.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("spectral radius basics") {
    CHECK(spectral_radius(Matrix::Identity(4, 4)) == doctest::Approx(1.0).epsilon(1e-12));
    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 0.5;
    d(1, 1) = -0.9;
    CHECK(spectral_radius(d) == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("solve_riccati reports non-stabilizable pairs") {
    Matrix a = 2.0 * Matrix::Identity(2, 2);
    Matrix b = Matrix::Zero(2, 1);
    CHECK_THROWS_AS(solve_riccati(DynamicsPair(a, b),
                                  CostPair(Matrix::Identity(2, 2), Matrix::Identity(1, 1)),
                                  1e-10, 500),
                    NonConvergenceError);
}

TEST_CASE("cost matrices must be symmetric positive definite") {
    Matrix q = Matrix::Identity(2, 2);
    q(0, 0) = -1.0;
    CHECK_THROWS_AS(CostPair(q, Matrix::Identity(2, 2)), ConfigError);
    Matrix asym(2, 2);
    asym << 1.0, 0.5, -0.5, 1.0;
    CHECK_THROWS_AS(CostPair(Matrix::Identity(2, 2), asym), ConfigError);
    Matrix nan_a = Matrix::Zero(2, 2);
    nan_a(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(DynamicsPair(nan_a, Matrix::Identity(2, 2)), ConfigError);
    CHECK_THROWS_AS(DynamicsPair(Matrix::Zero(2, 3), Matrix::Identity(2, 2)), ConfigError);
}

TEST_CASE("lyapunov tail identities") {
    SystemSpec sys = paper_eq11();
    Matrix d0 = sys.d0();
    Matrix p0 = symmetrize(sys.cost.Q + sys.opt.L.transpose() * sys.cost.R * sys.opt.L);

    Matrix full = lyapunov_tail(d0, p0, 0);
    // K - D0' K D0 = P0
    CHECK(max_abs_diff(full - d0.transpose() * full * d0, p0) <= 1e-10);
    // the closed-loop Lyapunov solution is the Riccati fixed point
    CHECK(max_abs_diff(full, sys.opt.K) <= 1e-9);

    Matrix zero = Matrix::Zero(3, 3);
    CHECK(max_abs_diff(lyapunov_tail(zero, p0, 0), p0) <= 1e-14);
    CHECK(lyapunov_tail(zero, p0, 1).cwiseAbs().maxCoeff() <= 1e-14);

    Matrix unstable = 1.5 * Matrix::Identity(2, 2);
    CHECK_THROWS_AS(lyapunov_tail(unstable, Matrix::Identity(2, 2), 0), NumericalError);
}

TEST_CASE("lyapunov tail partial sums are monotone in the PSD order") {
    SystemSpec sys = make_random_stable_system(3, 2, 11);
    Matrix d0 = sys.d0();
    Matrix p0 = symmetrize(sys.cost.Q + sys.opt.L.transpose() * sys.cost.R * sys.opt.L);
    auto tails = lyapunov_tail_sequence(d0, p0, 12);
    for (std::size_t j = 1; j < tails.size(); ++j) {
        Matrix diff = tails[j - 1] - tails[j];
        Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(diff), Eigen::EigenvaluesOnly);
        CHECK(es.eigenvalues().minCoeff() >= -1e-12);
        for (int i = 0; i < diff.rows(); ++i) CHECK(diff(i, i) >= -1e-12);
        CHECK(max_abs_diff(tails[j], lyapunov_tail(d0, p0, static_cast<long>(j))) <= 1e-12);
    }
}

TEST_CASE("fixed-point iteration converges geometrically") {
    SystemSpec sys = paper_eq11();
    Matrix k = sys.cost.Q;
    std::vector<double> diffs;
    for (int iter = 0; iter < 40; ++iter) {
        Matrix next = riccati_operator(sys.theta0, sys.cost, k);
        diffs.push_back(spectral_norm(next - k));
        k = next;
        if (diffs.back() < 1e-13) break;
    }
    REQUIRE(diffs.size() >= 11);
    for (std::size_t i = diffs.size() - 10; i < diffs.size(); ++i)
        CHECK(diffs[i] < diffs[i - 1]);
}

TEST_CASE("returned solutions satisfy the residual and stabilization invariants") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        int p = 1 + static_cast<int>(seed % 3);
        int r = 1 + static_cast<int>((seed + 1) % 3);
        SystemSpec sys = make_random_stable_system(p, r, 100 + seed);
        Matrix t = riccati_operator(sys.theta0, sys.cost, sys.opt.K);
        CHECK(spectral_norm(sys.opt.K - t) <= 1e-10);
        CHECK(spectral_radius(sys.theta0.A + sys.theta0.B * sys.opt.L) < 1.0);
        Eigen::SelfAdjointEigenSolver<Matrix> es(sys.opt.K, Eigen::EigenvaluesOnly);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
}

TEST_CASE("gain map is Lipschitz over a decade of perturbation scales") {
    SystemSpec sys = make_random_stable_system(3, 2, 42);
    RngStream rng(7);
    Matrix direction(3, 5);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 5; ++j) direction(i, j) = rng.gaussian();
    direction /= spectral_norm(direction);

    std::vector<double> ratios;
    for (double scale : {1e-3, 3e-4, 1e-4}) {
        Matrix theta = sys.theta0.stacked() + scale * direction;
        DynamicsPair pair = DynamicsPair::from_stacked(theta, 3, 2);
        Matrix l = solve_riccati(pair, sys.cost).L;
        double ratio = spectral_norm(l - sys.opt.L) / scale;
        CHECK(std::isfinite(ratio));
        ratios.push_back(ratio);
    }
    double lo = *std::min_element(ratios.begin(), ratios.end());
    double hi = *std::max_element(ratios.begin(), ratios.end());
    CHECK(hi / std::max(lo, 1e-12) < 10.0);  // no blow-up as the scale shrinks
}
