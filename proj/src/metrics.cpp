#include "lqr/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace lqr {

namespace {

double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

void fill_normalizations(RegretRecord& rec) {
    if (rec.t < 3) {
        rec.norm_regret_thm3 = nan_value();
        rec.norm_err_thm3 = std::isnan(rec.est_err_sq) ? nan_value() : rec.norm_err_thm3;
        if (!std::isnan(rec.est_err_sq))
            rec.norm_err_thm3 = std::sqrt(static_cast<double>(rec.t)) * rec.est_err_sq;
        return;
    }
    double n = static_cast<double>(rec.t);
    double log_n = std::log(n);
    rec.norm_regret_thm3 = rec.regret / (std::sqrt(n) * log_n * log_n);
    rec.norm_err_thm3 = std::isnan(rec.est_err_sq) ? nan_value() : std::sqrt(n) * rec.est_err_sq;
}

}  // namespace

CoupledRun coupled_regret(const SystemSpec& spec, PolicyState& policy, long horizon,
                          std::uint64_t seed, const NoiseModel& noise,
                          const RecordSpec& records) {
    require(horizon >= 1, "horizon must be at least 1");
    RngStream w_rng(derive_seed(seed, StreamTag::noise_w));
    RngStream v_rng(derive_seed(seed, StreamTag::perturb_v));
    RngStream baseline_rng(derive_seed(seed, StreamTag::baseline));

    std::vector<Vector> w;
    w.reserve(static_cast<std::size_t>(horizon));
    for (long t = 1; t <= horizon; ++t) w.push_back(sample_noise(noise, t, w_rng));

    const Matrix theta0 = spec.theta0.stacked();
    const Matrix& l_star = spec.opt.L;

    CoupledRun run;
    run.trace.seed = seed;
    run.trace.traj.x.push_back(Vector::Zero(spec.p()));
    run.trace.gains.push_back(policy.gain);

    auto estimate_error_sq = [&]() -> double {
        if (policy.adaptive()) {
            if (policy.estimator.n_samples == 0 && policy.estimate.isZero(0.0)) return nan_value();
            double e = identification_error(policy.estimate, theta0);
            return e * e;
        }
        // Non-adaptive policies: fresh ridge-guarded LSE at the record time.
        if (policy.estimator.n_samples < spec.q()) return nan_value();
        try {
            Matrix theta = solve_lse(policy.estimator, 1e-8);
            double e = identification_error(theta, theta0);
            return e * e;
        } catch (const NumericalError&) {
            return nan_value();
        }
    };

    auto make_record = [&](long t, double regret) {
        RegretRecord rec;
        rec.t = t;
        rec.epoch = policy.epoch;
        rec.regret = regret;
        rec.est_err_sq = estimate_error_sq();
        fill_normalizations(rec);
        return rec;
    };

    Vector x = Vector::Zero(spec.p());
    Vector x_star = x;
    double cumulative = 0.0;
    long last_recorded = 0;
    bool diverged = false;

    for (long t = 0; t < horizon; ++t) {
        StepOutput out = policy_step(policy, x, t, v_rng, baseline_rng);
        if (out.updated && (policy.gain - run.trace.gains.back()).norm() != 0.0)
            run.trace.gains.push_back(policy.gain);
        run.trace.gain_index.push_back(static_cast<int>(run.trace.gains.size()) - 1);

        bool record_now = t >= 1 && ((records.every > 0 && t % records.every == 0) ||
                                     (records.at_updates && out.updated));
        if (record_now && t != last_recorded) {
            run.records.push_back(make_record(t, cumulative));
            last_recorded = t;
        }

        const Vector& w_t = w[static_cast<std::size_t>(t)];
        auto [x_next, cost] = step(spec, x, out.u, w_t);
        if (!x_next.allFinite() || x_next.norm() > 1e100) {
            // Cut before the Gram matrix overflows; the replicate is reported
            // as diverged with infinite regret from here on.
            diverged = true;
            cumulative = std::numeric_limits<double>::infinity();
            run.trace.traj.x.push_back(x_next);
            run.trace.traj.u.push_back(out.u);
            run.trace.traj.v.push_back(out.v);
            run.trace.traj.w.push_back(w_t);
            run.trace.traj.cost.push_back(cost);
            break;
        }
        Vector u_star = optimal_input(x_star, l_star);
        auto [x_star_next, cost_star] = step(spec, x_star, u_star, w_t);
        cumulative += cost - cost_star;

        absorb(policy.estimator, x, out.u, x_next);
        run.trace.traj.u.push_back(out.u);
        run.trace.traj.v.push_back(out.v);
        run.trace.traj.w.push_back(w_t);
        run.trace.traj.cost.push_back(cost);
        run.trace.v_cov_scale.push_back(out.v_cov_scale);
        run.trace.v_norm_bound.push_back(out.v_norm_bound);
        run.trace.traj.x.push_back(x_next);

        x = x_next;
        x_star = x_star_next;
    }

    if (!diverged) policy_update(policy, horizon, baseline_rng);
    if (last_recorded != horizon) run.records.push_back(make_record(horizon, cumulative));
    run.final_regret = cumulative;
    run.diverged = diverged;
    run.trace.diverged = diverged;
    return run;
}

double telescoping_oracle(const SystemSpec& spec, const PolicyTrace& trace) {
    const long n = trace.length();
    require(n >= 1, "empty trace");
    if (trace.diverged) throw IntegrityError("telescoping oracle needs a non-diverged trace");

    // The trace must reproduce bit-for-bit under the recorded dynamics; a
    // mismatch means the trace and its claimed noise sequence are inconsistent.
    for (long t = 0; t < n; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        auto [x_next, cost] = step(spec, trace.traj.x[ts], trace.traj.u[ts], trace.traj.w[ts]);
        if (x_next != trace.traj.x[ts + 1] || cost != trace.traj.cost[ts])
            throw IntegrityError("trace does not reproduce under the recorded noise sequence");
    }

    const Matrix& l_star = spec.opt.L;
    auto switched_cost = [&](long k) {
        // pi_k: follow the recorded inputs for t < k, optimal feedback after.
        Vector x = trace.traj.x.front();
        double total = 0.0;
        for (long t = 0; t < n; ++t) {
            const auto ts = static_cast<std::size_t>(t);
            Vector u = t < k ? trace.traj.u[ts] : Vector(l_star * x);
            auto [x_next, cost] = step(spec, x, u, trace.traj.w[ts]);
            total += cost;
            x = x_next;
        }
        return total;
    };

    double previous = switched_cost(0);
    double total = 0.0;
    for (long k = 1; k <= n; ++k) {
        double current = switched_cost(k);
        total += current - previous;  // per-switch cost difference
        previous = current;
    }
    return total;
}

DecompositionTerms closed_form_decomposition(const SystemSpec& spec, const PolicyTrace& trace) {
    const long n = trace.length();
    require(n >= 1, "empty trace");
    const Matrix d0 = spec.d0();
    if (spectral_radius(d0) >= 1.0)
        throw NumericalError("closed-form decomposition needs a stable optimal loop");

    const Matrix& l_star = spec.opt.L;
    const Matrix& b0 = spec.theta0.B;
    const Matrix p0 = symmetrize(spec.cost.Q + l_star.transpose() * spec.cost.R * l_star);
    const Matrix m = symmetrize(b0.transpose() * spec.opt.K * b0 + spec.cost.R);
    Eigen::SelfAdjointEigenSolver<Matrix> m_es(m);
    if (m_es.info() != Eigen::Success) throw NumericalError("M eigendecomposition failed");
    const Matrix m_sqrt = m_es.operatorSqrt();

    // tails[j] = sum_{i >= j} D0'^i P0 D0^i; the appendix K_k equals tails[n-k].
    const std::vector<Matrix> tails = lyapunov_tail_sequence(d0, p0, n);
    const Matrix& k_full = tails[0];

    DecompositionTerms terms;
    Vector carry;  // running sum_{k<=j} D0^{j-k} z_{k-1}
    for (long k = 0; k < n; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        const Vector& x = trace.traj.x[ks];
        const Vector& v = trace.traj.v[ks];
        const Matrix& l_k = trace.gain_at(k);
        const Matrix delta = b0 * (l_k - l_star);
        const Matrix& k_next = tails[static_cast<std::size_t>(n - k - 1)];  // K_{k+1}

        Matrix h = d0.transpose() * k_next * delta + delta.transpose() * k_next * d0 +
                   delta.transpose() * k_next * delta;
        terms.phi -= x.dot(h * x);

        Matrix partial = k_full - k_next;  // K_n - K_{k+1}, PSD partial sum
        Matrix f = spec.cost.R + b0.transpose() * partial * b0;
        terms.zeta += v.dot(f * v);

        Matrix g = l_k.transpose() * spec.cost.R + (d0 + delta).transpose() * partial * b0;
        // The per-switch expansion carries 2 x(k)'G_k v(k); the aggregate
        // keeps that factor (checked against the telescoping oracle).
        terms.xi += 2.0 * x.dot(g * v);

        terms.psi += (m_sqrt * ((l_k - l_star) * x)).squaredNorm();

        Vector z = delta * x + b0 * v;
        if (k == 0) {
            carry = z;
        } else {
            // carry currently equals the martingale weight for j = k.
            const Matrix& k_j = tails[static_cast<std::size_t>(n - k)];
            Vector s = 2.0 * ((k_full - k_j) * carry);
            terms.martingale += s.dot(trace.traj.w[static_cast<std::size_t>(k - 1)]);
            carry = d0 * carry + z;
        }
    }
    terms.telescoping_total =
        terms.phi + terms.zeta + terms.xi + terms.psi + terms.martingale;
    return terms;
}

double identification_error(const Matrix& theta_hat, const Matrix& theta0) {
    require(theta_hat.rows() == theta0.rows() && theta_hat.cols() == theta0.cols(),
            "identification_error: shape mismatch");
    return spectral_norm(theta_hat - theta0);
}

TheoremNormalizations theorem_normalizations(const RegretRecord& record, double alpha,
                                             double delta) {
    require(record.t >= 3, "normalizations need t >= 3");
    require(alpha > 0.0 && delta > 0.0, "alpha and delta must be positive");
    double n = static_cast<double>(record.t);
    double log_nd = std::log(n / delta);
    double log_n = std::log(n);
    double regret_exp = std::max(2.0, 4.0 / alpha);
    TheoremNormalizations out;
    out.regret_thm3 = record.regret / (std::sqrt(n) * std::pow(log_nd, regret_exp));
    out.err_sq_thm3 = record.est_err_sq / (std::pow(n, -0.5) * std::pow(log_nd, 2.0 / alpha - 1.0));
    out.regret_thm4 = record.regret / (log_n * std::pow(log_nd, 1.0 + 2.0 / alpha));
    return out;
}

}  // namespace lqr
