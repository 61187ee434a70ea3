#pragma once

#include <optional>
#include <span>
#include <string>

#include "lqr/dynamics.hpp"
#include "lqr/estimation.hpp"
#include "lqr/riccati.hpp"
#include "lqr/rng.hpp"
#include "lqr/types.hpp"

namespace lqr {

enum class PolicyKind {
    optimal,
    perturbed_linear,
    perturbed_greedy,
    restricted_greedy,
    rce,
    ts,
};

std::string to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(const std::string& name);

// Mutable per-trajectory policy state. Owned by a single trajectory; distinct
// replicates run on distinct states.
struct PolicyState {
    PolicyKind kind = PolicyKind::optimal;
    CostPair cost;            // known to the adaptive operator
    int p = 0;
    int r = 0;

    Matrix gain;              // current L_t, r x p
    Matrix estimate;          // current theta_hat, p x q (adaptive kinds)
    EstimatorState estimator;
    ConstraintSet constraint;
    std::optional<PerturbationConfig> perturb;
    double gamma = 1.2;       // epoch growth rate (adaptive kinds)

    double persistent_sd = 0.0;  // perturbed_linear: v ~ N(0, sd^2 I) every step
    double sigma_rce = 1.5;
    double ts_lambda = 1.0;
    double ts_scale = 1.0;
    // Exploration floor of the cited baseline: entrywise randomization of
    // variance >= ts_floor^2 t^{-1/2} added to the posterior draw, so the
    // randomization never contracts faster than the baseline's analysis
    // allows. Zero disables the floor (pure ridge posterior).
    double ts_floor = 1.5;
    double riccati_tol = 1e-10;
    double ridge_guard = 1e-8;
    bool frozen = false;      // skip estimate/gain updates (testing hook)

    int epoch = 0;            // deduplicated boundaries passed so far
    long next_update = 1;
    int boundary_exp = 0;

    bool fallback_flag = false;    // bootstrap fell back to the true gain
    int riccati_failures = 0;      // updates that kept the previous gain
    int estimator_failures = 0;    // updates where the LSE solve broke down

    PolicyState(PolicyKind kind, const CostPair& cost, int p, int r);

    bool adaptive() const {
        return kind == PolicyKind::perturbed_greedy || kind == PolicyKind::restricted_greedy ||
               kind == PolicyKind::rce || kind == PolicyKind::ts;
    }
};

struct StepOutput {
    Vector u;
    Vector v;
    bool updated = false;
    double v_cov_scale = 0.0;
    double v_norm_bound = std::numeric_limits<double>::infinity();
};

/// u = L(theta0) x; the optimal regulator applies no perturbation.
Vector optimal_input(const Vector& x, const Matrix& l_star);

/// Refreshes the estimate and gain when t is a deduplicated epoch boundary.
/// Returns whether an update happened. On Riccati non-convergence the
/// previous gain is kept for the epoch and the event is counted.
bool policy_update(PolicyState& state, long t, RngStream& baseline_rng);

StepOutput greedy_step(PolicyState& state, const Vector& x, long t,
                       RngStream& v_rng, RngStream& baseline_rng);
StepOutput restricted_greedy_step(PolicyState& state, const Vector& x, long t,
                                  RngStream& v_rng, RngStream& baseline_rng);
StepOutput rce_step(PolicyState& state, const Vector& x, long t,
                    RngStream& v_rng, RngStream& baseline_rng);
StepOutput ts_step(PolicyState& state, const Vector& x, long t,
                   RngStream& v_rng, RngStream& baseline_rng);

/// Dispatch on state.kind.
StepOutput policy_step(PolicyState& state, const Vector& x, long t,
                       RngStream& v_rng, RngStream& baseline_rng);

struct BootstrapResult {
    Matrix gain;
    Matrix theta_hat;
    EstimatorState estimator;
    bool fallback = false;
    int rounds = 0;
};

/// Excite-estimate-certify bootstrap: drives the system with pure-noise
/// inputs for n0 steps, fits the LSE, and returns L(theta_hat) when it
/// stabilizes the estimated closed loop. Escalates the input variance and
/// extends by n0 more steps up to 5 rounds; the final fallback returns the
/// true-system gain with the fallback flag set, so experiments never abort.
BootstrapResult bootstrap_stabilizer(const SystemSpec& spec, const NoiseModel& noise,
                                     long n0, RngStream& rng);

/// Runs the policy for `horizon` steps on the given noise sequence
/// (w[t] = w(t+1)), starting from x(0) = 0, recording the full trace.
PolicyTrace simulate(const SystemSpec& spec, PolicyState& state, std::span<const Vector> w,
                     RngStream& v_rng, RngStream& baseline_rng, long horizon);

}  // namespace lqr
