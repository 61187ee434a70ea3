#include "lqr/policies.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace lqr {

namespace {

bool gram_needs_ridge(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(m), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) return true;
    double lmin = es.eigenvalues().minCoeff();
    double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
    return lmin < 1e-10 || lmin <= 1e-12 * std::max(1.0, lmax);
}

// LSE with the harness ridge guard: unregularized at scheduled updates, a
// tiny ridge when the Gram matrix is effectively singular.
Matrix guarded_lse(const PolicyState& st) {
    double ridge = gram_needs_ridge(st.estimator.gram) ? st.ridge_guard : 0.0;
    if (st.kind == PolicyKind::restricted_greedy)
        return solve_restricted_lse(st.estimator, st.constraint, ridge);
    return solve_lse(st.estimator, ridge);
}

void advance_boundary(PolicyState& st, long t) {
    st.epoch += 1;
    for (;;) {
        st.boundary_exp += 1;
        double value = std::floor(std::pow(st.gamma, static_cast<double>(st.boundary_exp)));
        if (value > static_cast<double>(t)) {
            st.next_update = static_cast<long>(value);
            return;
        }
    }
}

// Thompson row sampler: rows of theta ~ N(lse row, scale^2 sigma_hat^2 (V + lambda I)^{-1}),
// plus the exploration-floor randomization of variance ts_floor^2 t^{-1/2}.
Matrix ts_sample(const PolicyState& st, const Matrix& lse, long t, RngStream& rng) {
    const int p = st.p;
    const int q = st.p + st.r;
    Matrix shifted = symmetrize(st.estimator.gram);
    shifted.diagonal().array() += st.ts_lambda;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() != Eigen::Success) throw NumericalError("TS posterior factorization failed");
    double dof = static_cast<double>(std::max<long>(1, st.estimator.n_samples - q));
    double sigma_sq = std::max(lse_objective(st.estimator, lse), 0.0) / (p * dof);
    double sd = st.ts_scale * std::sqrt(sigma_sq);
    double floor_sd = st.ts_floor * std::pow(static_cast<double>(t), -0.25);
    Matrix theta = lse;
    for (int i = 0; i < p; ++i) {
        Vector z = rng.gaussian_vector(q);
        theta.row(i) += sd * llt.matrixU().solve(z).transpose();
        if (st.ts_floor > 0.0)
            theta.row(i) += floor_sd * rng.gaussian_vector(q).transpose();
    }
    return theta;
}

StepOutput greedy_like_step(PolicyState& st, const Vector& x, long t, RngStream& v_rng,
                            RngStream& baseline_rng, bool with_perturbation) {
    bool updated = policy_update(st, t, baseline_rng);
    StepOutput out;
    out.updated = updated;
    out.v = Vector::Zero(st.r);
    if (with_perturbation && st.perturb) {
        out.v = sample_perturbation(*st.perturb, st.epoch, st.r, v_rng);
        out.v_cov_scale = st.perturb->cov_scale(st.epoch);
        out.v_norm_bound = std::sqrt(st.perturb->norm_bound_sq(st.epoch));
    } else if (st.kind == PolicyKind::perturbed_linear && st.persistent_sd > 0.0) {
        out.v = st.persistent_sd * v_rng.gaussian_vector(st.r);
        out.v_cov_scale = st.persistent_sd * st.persistent_sd;
    }
    out.u = st.gain * x + out.v;
    return out;
}

}  // namespace

std::string to_string(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::optimal: return "optimal";
        case PolicyKind::perturbed_linear: return "perturbed_linear";
        case PolicyKind::perturbed_greedy: return "perturbed_greedy";
        case PolicyKind::restricted_greedy: return "restricted_greedy";
        case PolicyKind::rce: return "rce";
        case PolicyKind::ts: return "ts";
    }
    return "unknown";
}

PolicyKind policy_kind_from_string(const std::string& name) {
    for (PolicyKind k : {PolicyKind::optimal, PolicyKind::perturbed_linear,
                         PolicyKind::perturbed_greedy, PolicyKind::restricted_greedy,
                         PolicyKind::rce, PolicyKind::ts})
        if (to_string(k) == name) return k;
    throw ConfigError("unknown policy kind: " + name);
}

PolicyState::PolicyState(PolicyKind kind_, const CostPair& cost_, int p_, int r_)
    : kind(kind_),
      cost(cost_),
      p(p_),
      r(r_),
      gain(Matrix::Zero(r_, p_)),
      estimate(Matrix::Zero(p_, p_ + r_)),
      estimator(p_, p_ + r_),
      constraint(ConstraintSet::none_of(p_, p_ + r_)) {}

Vector optimal_input(const Vector& x, const Matrix& l_star) {
    require(l_star.cols() == x.size(), "optimal_input: dimension mismatch");
    return l_star * x;
}

bool policy_update(PolicyState& st, long t, RngStream& baseline_rng) {
    if (!st.adaptive() || st.frozen) return false;
    if (t != st.next_update) return false;
    advance_boundary(st, t);

    Matrix lse;
    try {
        lse = guarded_lse(st);
    } catch (const NumericalError&) {
        // Estimator breakdown (near-diverged data); keep the previous
        // estimate and gain for this epoch.
        st.estimator_failures += 1;
        return true;
    }
    st.estimate = lse;
    st.estimator.theta_hat = lse;

    try {
        Matrix theta_for_gain = lse;
        if (st.kind == PolicyKind::rce && st.sigma_rce > 0.0) {
            double sd = st.sigma_rce * std::pow(static_cast<double>(t), -0.25);
            Matrix g(st.p, st.p + st.r);
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) g(i, j) = sd * baseline_rng.gaussian();
            theta_for_gain += g;
        } else if (st.kind == PolicyKind::ts && (st.ts_scale > 0.0 || st.ts_floor > 0.0)) {
            theta_for_gain = ts_sample(st, lse, t, baseline_rng);
        }
        DynamicsPair pair = DynamicsPair::from_stacked(theta_for_gain, st.p, st.r);
        st.gain = solve_riccati(pair, st.cost, st.riccati_tol).L;
    } catch (const NumericalError&) {
        // Keep the previous gain for this epoch and flag the event.
        st.riccati_failures += 1;
    }
    return true;
}

StepOutput greedy_step(PolicyState& st, const Vector& x, long t, RngStream& v_rng,
                       RngStream& baseline_rng) {
    return greedy_like_step(st, x, t, v_rng, baseline_rng, /*with_perturbation=*/true);
}

StepOutput restricted_greedy_step(PolicyState& st, const Vector& x, long t, RngStream& v_rng,
                                  RngStream& baseline_rng) {
    return greedy_like_step(st, x, t, v_rng, baseline_rng, /*with_perturbation=*/true);
}

StepOutput rce_step(PolicyState& st, const Vector& x, long t, RngStream& v_rng,
                    RngStream& baseline_rng) {
    return greedy_like_step(st, x, t, v_rng, baseline_rng, /*with_perturbation=*/false);
}

StepOutput ts_step(PolicyState& st, const Vector& x, long t, RngStream& v_rng,
                   RngStream& baseline_rng) {
    return greedy_like_step(st, x, t, v_rng, baseline_rng, /*with_perturbation=*/false);
}

StepOutput policy_step(PolicyState& st, const Vector& x, long t, RngStream& v_rng,
                       RngStream& baseline_rng) {
    switch (st.kind) {
        case PolicyKind::optimal: {
            StepOutput out;
            out.v = Vector::Zero(st.r);
            out.u = optimal_input(x, st.gain);
            return out;
        }
        case PolicyKind::perturbed_linear:
            return greedy_like_step(st, x, t, v_rng, baseline_rng, /*with_perturbation=*/false);
        case PolicyKind::perturbed_greedy:
            return greedy_step(st, x, t, v_rng, baseline_rng);
        case PolicyKind::restricted_greedy:
            return restricted_greedy_step(st, x, t, v_rng, baseline_rng);
        case PolicyKind::rce:
            return rce_step(st, x, t, v_rng, baseline_rng);
        case PolicyKind::ts:
            return ts_step(st, x, t, v_rng, baseline_rng);
    }
    throw ConfigError("unknown policy kind");
}

BootstrapResult bootstrap_stabilizer(const SystemSpec& spec, const NoiseModel& noise, long n0,
                                     RngStream& rng) {
    require(n0 >= spec.p() + spec.r(), "bootstrap needs at least p + r samples");
    EstimatorState est(spec.p(), spec.q());
    Vector x = Vector::Zero(spec.p());
    Matrix theta_last = Matrix::Zero(spec.p(), spec.q());
    long t_global = 0;
    constexpr int kRounds = 5;
    for (int round = 0; round < kRounds; ++round) {
        double input_sd = std::pow(2.0, round);  // escalate excitation per round
        for (long i = 0; i < n0; ++i) {
            Vector u = input_sd * rng.gaussian_vector(spec.r());
            Vector w = sample_noise(noise, t_global + 1, rng);
            auto [x_next, cost] = step(spec, x, u, w);
            absorb(est, x, u, x_next);
            x = x_next;
            ++t_global;
        }
        try {
            double ridge = gram_needs_ridge(est.gram) ? 1e-8 : 0.0;
            theta_last = solve_lse(est, ridge);
            est.theta_hat = theta_last;
            DynamicsPair pair = DynamicsPair::from_stacked(theta_last, spec.p(), spec.r());
            // Convergence certifies that the gain stabilizes the estimated loop.
            Matrix gain = solve_riccati(pair, spec.cost).L;
            return BootstrapResult{gain, theta_last, est, false, round + 1};
        } catch (const NumericalError&) {
            continue;
        }
    }
    return BootstrapResult{spec.opt.L, theta_last, est, true, kRounds};
}

PolicyTrace simulate(const SystemSpec& spec, PolicyState& st, std::span<const Vector> w,
                     RngStream& v_rng, RngStream& baseline_rng, long horizon) {
    require(static_cast<long>(w.size()) >= horizon, "noise sequence shorter than horizon");
    PolicyTrace trace;
    trace.traj.x.reserve(horizon + 1);
    trace.traj.x.push_back(Vector::Zero(spec.p()));
    trace.gains.push_back(st.gain);
    Vector x = trace.traj.x.front();
    for (long t = 0; t < horizon; ++t) {
        StepOutput out = policy_step(st, x, t, v_rng, baseline_rng);
        if (out.updated && (st.gain - trace.gains.back()).norm() != 0.0)
            trace.gains.push_back(st.gain);
        trace.gain_index.push_back(static_cast<int>(trace.gains.size()) - 1);
        auto [x_next, cost] = step(spec, x, out.u, w[static_cast<std::size_t>(t)]);
        trace.traj.u.push_back(out.u);
        trace.traj.v.push_back(out.v);
        trace.traj.w.push_back(w[static_cast<std::size_t>(t)]);
        trace.traj.cost.push_back(cost);
        trace.v_cov_scale.push_back(out.v_cov_scale);
        trace.v_norm_bound.push_back(out.v_norm_bound);
        trace.traj.x.push_back(x_next);
        if (!x_next.allFinite() || x_next.norm() > 1e100) {
            trace.diverged = true;
            break;
        }
        absorb(st.estimator, x, out.u, x_next);
        x = x_next;
    }
    return trace;
}

}  // namespace lqr
