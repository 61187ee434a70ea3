#pragma once

#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "lqr/riccati.hpp"
#include "lqr/rng.hpp"
#include "lqr/types.hpp"

namespace lqr {

enum class NoiseFamily { gaussian, truncated_gaussian, symmetric_weibull_tail };

// Sub-Weibull noise descriptor. The covariance schedule is cyclic: the
// covariance at time t is schedule[(t-1) mod len]. A single entry gives the
// homoscedastic case used by the default experiments.
struct NoiseModel {
    NoiseFamily family = NoiseFamily::gaussian;
    std::vector<Matrix> covariance_schedule;
    double alpha = 2.0;  // tail exponent: 2 Gaussian, inf bounded
    double bound = 0.0;  // hard norm cap; required for truncated_gaussian

    static NoiseModel isotropic_gaussian(int p, double variance = 1.0);
    static NoiseModel make(NoiseFamily family, std::vector<Matrix> schedule,
                           double alpha, double bound = 0.0);

    int dim() const { return static_cast<int>(covariance_schedule.front().rows()); }
    const Matrix& covariance_at(long t) const;
    const Matrix& sqrt_covariance_at(long t) const;

    /// Time-averaged minimum eigenvalue of the covariance over one cycle
    /// (the sigma_0 of the excitation assumption).
    double sigma0() const;

private:
    std::vector<Matrix> sqrt_schedule_;
};

/// Mean-zero draw from the configured family at time t.
Vector sample_noise(const NoiseModel& model, long t, RngStream& rng);

// Epoch-scheduled perturbation design. During epoch m the signal is an
// isotropic truncated Gaussian with per-coordinate variance cov_scale(m)
// and hard norm bound sqrt(norm_bound_sq(m)), so that
//   c_low < m^-2 gamma^{m/2} lambda_min(Sigma_m) <= m^-2 gamma^{m/2} vbar_m^2 < c_high
// holds in algorithm1 mode. Restricted mode decays as gamma^-m instead.
struct PerturbationConfig {
    enum class Mode { algorithm1, restricted };

    double gamma = 1.2;
    double c_low = 1.0;
    double c_high = 10.0;
    Mode mode = Mode::algorithm1;

    // Margins: cov_scale = rho_lo * kappa * c_low * s_m, norm bound^2 =
    // rho_hi * c_high * s_m. Defaults keep the post-truncation covariance
    // about 10% above c_low at r = 3 with ~92% acceptance.
    double rho_lo = 1.2;
    double rho_hi = 0.9;
    double kappa = 1.1;

    /// Decay base s_m: m_eff^2 gamma^{-m_eff/2} (algorithm1) or
    /// gamma^{-m_eff} (restricted), with m_eff = max(m, 1).
    double scale_base(int m) const;
    double cov_scale(int m) const;
    double norm_bound_sq(int m) const;
};

/// Pre-truncation acceptance probability P(||v|| <= vbar_m) for input
/// dimension r; independent of m by construction.
double perturbation_acceptance(const PerturbationConfig& cfg, int r);

/// Throws ConfigError on gamma <= 1, violated r*c_low < c_high, or
/// truncation probability above 50%.
void validate_perturbation(const PerturbationConfig& cfg, int r);

/// Epoch index of time t: the number of deduplicated boundaries
/// floor(gamma^m) that are <= t. Monotone nondecreasing in t.
int epoch_of(long t, double gamma);

/// Strictly increasing set {floor(gamma^m) : m >= 0} intersected with [1, horizon].
std::vector<long> update_times(double gamma, long horizon);

/// Mean-zero truncated-Gaussian perturbation for epoch m.
Vector sample_perturbation(const PerturbationConfig& cfg, int m, int r, RngStream& rng);

// True system: dynamics pair, cost matrices, and the Riccati solution of the
// truth (which doubles as the stabilizability certificate).
struct SystemSpec {
    DynamicsPair theta0;
    CostPair cost;
    RiccatiSolution opt;  // K(theta0), L(theta0)

    static SystemSpec make(DynamicsPair theta0, CostPair cost);

    int p() const { return theta0.p(); }
    int r() const { return theta0.r(); }
    int q() const { return theta0.q(); }

    /// Optimal closed loop D0 = A0 + B0 L(theta0).
    Matrix d0() const { return theta0.A + theta0.B * opt.L; }
};

// Aligned per-step record of a simulated run. w[i] holds w(i+1), the noise
// entering x[i+1]; x has length n+1, everything else length n.
struct Trajectory {
    std::vector<Vector> x;
    std::vector<Vector> u;
    std::vector<Vector> v;
    std::vector<Vector> w;
    std::vector<double> cost;

    long length() const { return static_cast<long>(u.size()); }
};

// Trajectory plus the recorded policy internals the metrics module consumes:
// the gain in force at each step and the configured perturbation covariance
// scale / norm bound per step.
struct PolicyTrace {
    Trajectory traj;
    std::vector<Matrix> gains;
    std::vector<int> gain_index;        // per step, into gains
    std::vector<double> v_cov_scale;    // per step, configured lambda_min of E[vv']
    std::vector<double> v_norm_bound;   // per step, hard bound on ||v||
    std::uint64_t seed = 0;
    bool diverged = false;

    const Matrix& gain_at(long t) const { return gains[gain_index[t]]; }
    long length() const { return traj.length(); }
};

/// One transition: x_next = A0 x + B0 u + w, cost = x'Qx + u'Ru.
std::pair<Vector, double> step(const SystemSpec& spec, const Vector& x,
                               const Vector& u, const Vector& w);

}  // namespace lqr
