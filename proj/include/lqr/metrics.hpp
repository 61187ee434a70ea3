#pragma once

#include <cstdint>
#include <vector>

#include "lqr/dynamics.hpp"
#include "lqr/policies.hpp"
#include "lqr/types.hpp"

namespace lqr {

struct RegretRecord {
    long t = 0;
    int epoch = 0;
    double regret = 0.0;            // sum_{s<t} [c_s(pi) - c_s(pi*)]
    double norm_regret_thm3 = 0.0;  // regret / (sqrt(t) log^2 t); NaN for t < 3
    double est_err_sq = 0.0;        // ||theta_hat - theta0||_2^2; NaN if unavailable
    double norm_err_thm3 = 0.0;     // sqrt(t) * est_err_sq
};

struct DecompositionTerms {
    double phi = 0.0;
    double zeta = 0.0;  // >= 0
    double xi = 0.0;
    double psi = 0.0;   // >= 0
    double martingale = 0.0;
    double telescoping_total = 0.0;  // phi + zeta + xi + psi + martingale

    double total() const { return telescoping_total; }
};

struct RecordSpec {
    long every = 100;        // record stride
    bool at_updates = true;  // also record at every estimate update
};

struct CoupledRun {
    std::vector<RegretRecord> records;
    PolicyTrace trace;
    double final_regret = 0.0;
    bool diverged = false;
};

/// Simulates the policy and the optimal regulator on the same noise
/// realization (common random numbers) from the same x(0) = 0, emitting
/// cumulative regret records. Streams are derived from `seed` with the
/// standard tags, so a fixed seed fully determines the run.
CoupledRun coupled_regret(const SystemSpec& spec, PolicyState& policy, long horizon,
                          std::uint64_t seed, const NoiseModel& noise,
                          const RecordSpec& records = {});

/// Policy-decomposition oracle: for each k simulates the switch policy pi_k
/// (follow the trace for t < k, optimal thereafter) on the shared noise and
/// accumulates the per-switch cost differences. The result equals the direct
/// regret as an algebraic identity. Throws IntegrityError when the trace does
/// not reproduce under the recorded dynamics.
double telescoping_oracle(const SystemSpec& spec, const PolicyTrace& trace);

/// Closed-form evaluation of the regret decomposition
///   R_n = phi_n + zeta_n + xi_n + psi_n + sum_j s(j)'w(j)
/// from the recorded trace. The cross term xi carries the factor 2 coming
/// from the per-switch term 2 x(k)'G_k v(k); the telescoping oracle pins
/// that factor numerically.
DecompositionTerms closed_form_decomposition(const SystemSpec& spec, const PolicyTrace& trace);

/// Operator-norm identification error.
double identification_error(const Matrix& theta_hat, const Matrix& theta0);

struct TheoremNormalizations {
    double regret_thm3 = 0.0;  // regret / (n^{1/2} log^{2 v 4/alpha}(n/delta))
    double err_sq_thm3 = 0.0;  // err^2 / (n^{-1/2} log^{2/alpha - 1}(n/delta))
    double regret_thm4 = 0.0;  // regret / (log n log^{1 + 2/alpha}(n/delta))
};

/// Theorem-scaling normalizations at tail exponent alpha and confidence delta.
TheoremNormalizations theorem_normalizations(const RegretRecord& record, double alpha,
                                             double delta);

}  // namespace lqr
