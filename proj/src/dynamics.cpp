#include "lqr/dynamics.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>

namespace lqr {

namespace {

Matrix psd_sqrt(const Matrix& cov) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(cov));
    if (es.info() != Eigen::Success) throw NumericalError("covariance eigendecomposition failed");
    Vector evals = es.eigenvalues();
    for (int i = 0; i < evals.size(); ++i) {
        if (evals(i) < -1e-10) throw ConfigError("noise covariance is not positive semidefinite");
        evals(i) = std::sqrt(std::max(evals(i), 0.0));
    }
    return es.eigenvectors() * evals.asDiagonal() * es.eigenvectors().transpose();
}

constexpr int kMaxRejectionDraws = 100000;

}  // namespace

NoiseModel NoiseModel::isotropic_gaussian(int p, double variance) {
    return make(NoiseFamily::gaussian, {variance * Matrix::Identity(p, p)}, 2.0);
}

NoiseModel NoiseModel::make(NoiseFamily family, std::vector<Matrix> schedule, double alpha,
                            double bound) {
    require(!schedule.empty(), "noise covariance schedule must be nonempty");
    const auto rows = schedule.front().rows();
    for (const auto& cov : schedule)
        require(cov.rows() == rows && cov.cols() == rows, "covariance schedule shapes differ");
    require(alpha > 0.0, "tail exponent alpha must be positive");
    if (family == NoiseFamily::truncated_gaussian)
        require(bound > 0.0, "truncated_gaussian needs a positive norm bound");

    NoiseModel model;
    model.family = family;
    model.covariance_schedule = std::move(schedule);
    model.alpha = family == NoiseFamily::gaussian ? 2.0
                : family == NoiseFamily::truncated_gaussian
                      ? std::numeric_limits<double>::infinity()
                      : alpha;
    model.bound = bound;
    model.sqrt_schedule_.reserve(model.covariance_schedule.size());
    for (const auto& cov : model.covariance_schedule) model.sqrt_schedule_.push_back(psd_sqrt(cov));
    return model;
}

const Matrix& NoiseModel::covariance_at(long t) const {
    const auto n = static_cast<long>(covariance_schedule.size());
    long idx = t >= 1 ? (t - 1) % n : 0;
    return covariance_schedule[static_cast<std::size_t>(idx)];
}

const Matrix& NoiseModel::sqrt_covariance_at(long t) const {
    const auto n = static_cast<long>(sqrt_schedule_.size());
    long idx = t >= 1 ? (t - 1) % n : 0;
    return sqrt_schedule_[static_cast<std::size_t>(idx)];
}

double NoiseModel::sigma0() const {
    double total = 0.0;
    for (const auto& cov : covariance_schedule) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(cov), Eigen::EigenvaluesOnly);
        total += std::max(es.eigenvalues().minCoeff(), 0.0);
    }
    return total / static_cast<double>(covariance_schedule.size());
}

Vector sample_noise(const NoiseModel& model, long t, RngStream& rng) {
    const int p = model.dim();
    const Matrix& root = model.sqrt_covariance_at(t);
    switch (model.family) {
        case NoiseFamily::gaussian:
            return root * rng.gaussian_vector(p);
        case NoiseFamily::truncated_gaussian: {
            for (int tries = 0; tries < kMaxRejectionDraws; ++tries) {
                Vector w = root * rng.gaussian_vector(p);
                if (w.norm() <= model.bound) return w;
            }
            throw NumericalError("truncated_gaussian: rejection sampling stalled; "
                                 "the norm bound is too tight for the covariance");
        }
        case NoiseFamily::symmetric_weibull_tail: {
            // Spherical direction with a Weibull(alpha) radius, scaled so the
            // covariance matches the configured one exactly.
            double norm_factor = std::sqrt(p / std::tgamma(1.0 + 2.0 / model.alpha));
            for (int tries = 0; tries < kMaxRejectionDraws; ++tries) {
                Vector z = rng.gaussian_vector(p);
                double zn = z.norm();
                if (zn == 0.0) continue;
                double radius = std::pow(-std::log(rng.uniform()), 1.0 / model.alpha);
                Vector w = root * (z / zn) * radius * norm_factor;
                if (model.bound <= 0.0 || w.norm() <= model.bound) return w;
            }
            throw NumericalError("symmetric_weibull_tail: rejection sampling stalled");
        }
    }
    throw ConfigError("unknown noise family");
}

double PerturbationConfig::scale_base(int m) const {
    int m_eff = std::max(m, 1);
    if (mode == Mode::restricted) return std::pow(gamma, -static_cast<double>(m_eff));
    return static_cast<double>(m_eff) * static_cast<double>(m_eff) *
           std::pow(gamma, -0.5 * static_cast<double>(m_eff));
}

double PerturbationConfig::cov_scale(int m) const { return rho_lo * kappa * c_low * scale_base(m); }

double PerturbationConfig::norm_bound_sq(int m) const { return rho_hi * c_high * scale_base(m); }

double perturbation_acceptance(const PerturbationConfig& cfg, int r) {
    double cov = cfg.rho_lo * cfg.kappa * cfg.c_low;
    if (cov <= 0.0) return 1.0;  // degenerate zero-scale config always accepts
    boost::math::chi_squared chi2(static_cast<double>(r));
    return boost::math::cdf(chi2, cfg.rho_hi * cfg.c_high / cov);
}

void validate_perturbation(const PerturbationConfig& cfg, int r) {
    require(cfg.gamma > 1.0, "perturbation gamma must exceed 1");
    require(cfg.c_low > 0.0, "c_low must be positive");
    require(cfg.c_high > 0.0, "c_high must be positive");
    require(r * cfg.c_low < cfg.c_high,
            "perturbation design needs r * c_low < c_high");
    require(cfg.rho_lo >= 0.0 && cfg.kappa >= 0.0, "margins must be nonnegative");
    require(cfg.rho_hi > 0.0 && cfg.rho_hi < 1.0, "rho_hi must lie in (0, 1)");
    if (perturbation_acceptance(cfg, r) < 0.5)
        throw ConfigError("perturbation margins reject more than 50% of draws; "
                          "lower kappa/rho_lo or raise c_high");
}

int epoch_of(long t, double gamma) {
    require(t >= 0, "time index must be nonnegative");
    require(gamma > 1.0, "gamma must exceed 1");
    int count = 0;
    long last = 0;
    for (int m = 0;; ++m) {
        double value = std::floor(std::pow(gamma, static_cast<double>(m)));
        if (value > static_cast<double>(t)) break;
        long boundary = static_cast<long>(value);
        if (boundary != last) {
            ++count;
            last = boundary;
        }
    }
    return count;
}

std::vector<long> update_times(double gamma, long horizon) {
    require(gamma > 1.0, "gamma must exceed 1");
    std::vector<long> times;
    long last = 0;
    for (int m = 0;; ++m) {
        double value = std::floor(std::pow(gamma, static_cast<double>(m)));
        if (value > static_cast<double>(horizon)) break;
        long boundary = static_cast<long>(value);
        if (boundary >= 1 && boundary != last) {
            times.push_back(boundary);
            last = boundary;
        }
    }
    return times;
}

Vector sample_perturbation(const PerturbationConfig& cfg, int m, int r, RngStream& rng) {
    double cov = cfg.cov_scale(m);
    if (cov <= 0.0) return Vector::Zero(r);
    double sd = std::sqrt(cov);
    double bound = std::sqrt(cfg.norm_bound_sq(m));
    for (int tries = 0; tries < kMaxRejectionDraws; ++tries) {
        Vector v = sd * rng.gaussian_vector(r);
        if (v.norm() <= bound) return v;
    }
    throw NumericalError("perturbation rejection sampling stalled; margins infeasible");
}

SystemSpec SystemSpec::make(DynamicsPair theta0, CostPair cost) {
    require(cost.Q.rows() == theta0.p(), "Q dimension does not match the state");
    require(cost.R.rows() == theta0.r(), "R dimension does not match the input");
    RiccatiSolution opt = solve_riccati(theta0, cost);  // certifies stabilizability
    return SystemSpec{std::move(theta0), std::move(cost), std::move(opt)};
}

std::pair<Vector, double> step(const SystemSpec& spec, const Vector& x, const Vector& u,
                               const Vector& w) {
    require(x.size() == spec.p() && u.size() == spec.r() && w.size() == spec.p(),
            "step: dimension mismatch");
    Vector x_next = spec.theta0.A * x + spec.theta0.B * u + w;
    double cost = x.dot(spec.cost.Q * x) + u.dot(spec.cost.R * u);
    return {std::move(x_next), cost};
}

}  // namespace lqr
